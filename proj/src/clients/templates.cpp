#include <cctype>
#include <unordered_set>

#include "clients_internal.hpp"
#include "megacurate/clients.hpp"
#include "megacurate/hash.hpp"

namespace megacurate {

namespace detail {
extern const char* const kStyleTemplateText;   // generated from assets/templates
extern const char* const kContentTemplateText;
} // namespace detail

std::string_view caption_mode_name(CaptionMode m) {
    return m == CaptionMode::Style ? "style" : "content";
}

CaptionMode parse_caption_mode(std::string_view name) {
    if (name == "style") return CaptionMode::Style;
    if (name == "content") return CaptionMode::Content;
    throw Error("unknown caption mode '" + std::string(name) + "'");
}

namespace {

InstructionTemplate make_template(std::string name, const char* text) {
    InstructionTemplate t;
    t.name = std::move(name);
    t.text = text;
    t.version = detail::hex16(fnv1a64(t.text));
    return t;
}

} // namespace

const InstructionTemplate& style_template() {
    static const InstructionTemplate t =
        make_template("style_caption", detail::kStyleTemplateText);
    return t;
}

const InstructionTemplate& content_template() {
    static const InstructionTemplate t =
        make_template("content_caption", detail::kContentTemplateText);
    return t;
}

const InstructionTemplate& template_for(CaptionMode mode) {
    return mode == CaptionMode::Style ? style_template() : content_template();
}

const InstructionTemplate& template_by_id(std::string_view id) {
    if (id == style_template().id()) return style_template();
    if (id == content_template().id()) return content_template();
    throw Error("unknown template id '" + std::string(id) +
                "' (this build ships " + style_template().id() + " and " +
                content_template().id() + ")");
}

void GenerationRequest::validate() const {
    if (combined_prompt.empty()) throw Error("generation request: empty prompt");
    if (steps < 1) throw Error("generation request: steps must be >= 1");
    if (!(cfg_scale > 0.0)) throw Error("generation request: cfg_scale must be > 0");
    if (width == 0 || height == 0) throw Error("generation request: zero resolution");
}

void ServiceEndpoint::validate() const {
    if (base_url.empty()) throw ConfigError("endpoint: base_url is empty");
    if (!(timeout_seconds > 0.0)) throw ConfigError("endpoint: timeout must be > 0");
    if (backoff_seconds < 0.0) throw ConfigError("endpoint: backoff must be >= 0");
}

const std::vector<std::string>& default_banned_lexicon() {
    static const std::vector<std::string> words = {
        "red",     "orange",    "yellow",  "green",   "blue",    "purple",
        "violet",  "pink",      "brown",   "black",   "white",   "gray",
        "grey",    "crimson",   "scarlet", "azure",   "teal",    "turquoise",
        "magenta", "golden",    "silver",  "ochre",   "emerald", "ivory",
        "charcoal", "amber",    "vermilion", "indigo", "sepia",  "watercolor",
        "monochrome",
    };
    return words;
}

std::optional<std::string> validate_caption(CaptionMode mode, std::string_view text,
                                            const std::vector<std::string>& banned_lexicon) {
    if (text.empty()) return "empty caption";
    if (mode == CaptionMode::Style) {
        if (!text.starts_with("In the style of "))
            return "style caption must start with \"In the style of\"";
        return std::nullopt;
    }
    std::unordered_set<std::string> banned;
    for (const auto& w : banned_lexicon) {
        std::string lower;
        for (char c : w) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        banned.insert(std::move(lower));
    }
    std::string token;
    auto flush = [&]() -> std::optional<std::string> {
        if (!token.empty() && banned.count(token))
            return "banned style word \"" + token + "\" in content caption";
        token.clear();
        return std::nullopt;
    };
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c)))
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        else if (auto diag = flush())
            return diag;
    }
    return flush();
}

} // namespace megacurate
