#include "megacurate/pairing.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "megacurate/hash.hpp"
#include "megacurate/log.hpp"

namespace megacurate {

void PairingConfig::validate(std::size_t content_pool_size) const {
    if (n_contents_per_style == 0)
        throw ConfigError("pairing: n_contents_per_style must be >= 1");
    if (n_contents_per_style > content_pool_size)
        throw ConfigError("pairing: n_contents_per_style " +
                          std::to_string(n_contents_per_style) + " exceeds content pool of " +
                          std::to_string(content_pool_size));
}

namespace {

void check_pool(const std::vector<PromptRecord>& pool, PromptKind kind, const char* name) {
    if (pool.empty()) throw Error(std::string("pairing: ") + name + " pool is empty");
    std::unordered_set<u64> ids;
    for (const auto& r : pool) {
        if (r.kind != kind)
            throw Error(std::string("pairing: ") + name + " pool holds a " +
                        std::string(kind_name(r.kind)) + " record (id " + std::to_string(r.id) +
                        ")");
        if (!ids.insert(r.id).second)
            throw IntegrityError(std::string("pairing: duplicate id in ") + name + " pool: " +
                                 std::to_string(r.id));
    }
}

// n distinct indices from [0, pool). Rejection sampling for sparse draws,
// a partial shuffle when n is a large fraction of the pool; both branches
// are deterministic functions of (rng, n, pool).
std::vector<u32> sample_distinct(Rng& rng, u32 n, std::size_t pool) {
    std::vector<u32> picks;
    picks.reserve(n);
    if (static_cast<std::size_t>(n) * 2 >= pool) {
        std::vector<u32> idx(pool);
        std::iota(idx.begin(), idx.end(), 0);
        for (u32 t = 0; t < n; ++t) {
            std::size_t j = t + rng.next_below(pool - t);
            std::swap(idx[t], idx[j]);
            picks.push_back(idx[t]);
        }
    } else {
        std::unordered_set<u32> seen;
        while (picks.size() < n) {
            u32 c = static_cast<u32>(rng.next_below(pool));
            if (seen.insert(c).second) picks.push_back(c);
        }
    }
    return picks;
}

StyleCombination make_pair(u64 style_id, u64 content_id) {
    StyleCombination c;
    c.style_id = style_id;
    c.content_id = content_id;
    c.combination_id = make_combination_id(style_id, content_id);
    c.generation_seed = static_cast<u32>(c.combination_id & 0xffffffffull);
    c.status = GenStatus::Pending;
    return c;
}

} // namespace

std::vector<StyleCombination> make_combinations(const std::vector<PromptRecord>& styles,
                                                const std::vector<PromptRecord>& contents,
                                                const PairingConfig& cfg) {
    check_pool(styles, PromptKind::Style, "style");
    check_pool(contents, PromptKind::Content, "content");
    cfg.validate(contents.size());

    std::vector<StyleCombination> out;
    out.reserve(styles.size() * cfg.n_contents_per_style);
    if (cfg.allow_content_reuse_across_styles) {
        for (const auto& s : styles) {
            Rng rng = Rng::substream(cfg.seed, s.id);
            for (u32 idx : sample_distinct(rng, cfg.n_contents_per_style, contents.size()))
                out.push_back(make_pair(s.id, contents[idx].id));
        }
    } else {
        u64 need = static_cast<u64>(styles.size()) * cfg.n_contents_per_style;
        if (need > contents.size())
            throw ConfigError("pairing: " + std::to_string(need) +
                              " no-reuse draws exceed content pool of " +
                              std::to_string(contents.size()));
        Rng rng(cfg.seed);
        std::vector<u32> order =
            sample_distinct(rng, static_cast<u32>(need), contents.size());
        std::size_t cursor = 0;
        for (const auto& s : styles)
            for (u32 t = 0; t < cfg.n_contents_per_style; ++t)
                out.push_back(make_pair(s.id, contents[order[cursor++]].id));
    }
    return out;
}

namespace {

// A separator-shaped line is zero or more backslashes followed by the
// separator; escaping adds one backslash, unescaping removes one.
bool separator_shaped(std::string_view line, std::size_t& backslashes) {
    backslashes = 0;
    while (backslashes < line.size() && line[backslashes] == '\\') ++backslashes;
    return line.substr(backslashes) == kPromptSeparator;
}

std::string escape_part(std::string_view text, bool& warned) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    for (;;) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        std::size_t bs;
        if (separator_shaped(line, bs)) {
            if (bs == 0) warned = true;
            out.push_back('\\');
        }
        out.append(line);
        if (nl == std::string_view::npos) break;
        out.push_back('\n');
        pos = nl + 1;
    }
    return out;
}

std::string unescape_part(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    for (;;) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        std::size_t bs;
        if (separator_shaped(line, bs) && bs > 0) line.remove_prefix(1);
        out.append(line);
        if (nl == std::string_view::npos) break;
        out.push_back('\n');
        pos = nl + 1;
    }
    return out;
}

} // namespace

std::string compose_prompt(std::string_view style_text, std::string_view content_text) {
    if (style_text.empty()) throw Error("compose_prompt: style text is empty");
    if (content_text.empty()) throw Error("compose_prompt: content text is empty");
    bool warned = false;
    std::string combined = escape_part(content_text, warned);
    combined.push_back('\n');
    combined.append(kPromptSeparator);
    combined.push_back('\n');
    combined.append(escape_part(style_text, warned));
    if (warned) log_warn("compose_prompt: separator line inside prompt text was escaped");
    return combined;
}

SplitPrompt split_prompt(std::string_view combined) {
    std::size_t pos = 0;
    std::size_t sep_begin = std::string_view::npos, sep_end = 0;
    for (;;) {
        std::size_t nl = combined.find('\n', pos);
        std::string_view line = combined.substr(
            pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (line == kPromptSeparator) {
            sep_begin = pos;
            sep_end = nl == std::string_view::npos ? combined.size() : nl + 1;
            break;
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (sep_begin == std::string_view::npos)
        throw Error("split_prompt: combined prompt lacks the separator line");
    if (sep_begin == 0 || sep_end >= combined.size())
        throw Error("split_prompt: empty content or style part");
    SplitPrompt parts;
    parts.content = unescape_part(combined.substr(0, sep_begin - 1)); // drop the '\n'
    parts.style = unescape_part(combined.substr(sep_end));
    return parts;
}

std::vector<StyleCombination> merge_combinations(const std::vector<StyleCombination>& existing,
                                                 const std::vector<StyleCombination>& fresh) {
    std::unordered_map<u64, const StyleCombination*> done;
    for (const auto& c : existing)
        if (c.status == GenStatus::Done) done.emplace(c.combination_id, &c);
    std::vector<StyleCombination> out = fresh;
    for (auto& c : out) {
        auto it = done.find(c.combination_id);
        if (it != done.end()) c = *it->second;
    }
    return out;
}

} // namespace megacurate
