#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "clients_internal.hpp"
#include "json.hpp"
#include "megacurate/clients.hpp"
#include "megacurate/hash.hpp"
#include "megacurate/kernels.hpp"
#include "megacurate/pairing.hpp"

namespace megacurate {

namespace {

using nlohmann::ordered_json;

constexpr std::string_view kStylePrefix = "mock://style/";
constexpr std::string_view kContentPrefix = "mock://content/";

u64 parse_number(std::string_view s, std::string_view ref) {
    if (s.empty()) throw Error("mock: malformed image ref '" + std::string(ref) + "'");
    u64 v = 0;
    for (char c : s) {
        if (c < '0' || c > '9')
            throw Error("mock: malformed image ref '" + std::string(ref) + "'");
        v = v * 10 + static_cast<u64>(c - '0');
    }
    return v;
}

struct StyleRef {
    u32 cls;
    u64 index;
};

StyleRef parse_style_ref(std::string_view ref) {
    if (!ref.starts_with(kStylePrefix))
        throw Error("mock: not a style image ref: '" + std::string(ref) + "'");
    std::string_view rest = ref.substr(kStylePrefix.size());
    std::size_t slash = rest.find('/');
    if (slash == std::string_view::npos)
        throw Error("mock: malformed image ref '" + std::string(ref) + "'");
    return {static_cast<u32>(parse_number(rest.substr(0, slash), ref)),
            parse_number(rest.substr(slash + 1), ref)};
}

u64 parse_content_ref(std::string_view ref) {
    if (!ref.starts_with(kContentPrefix))
        throw Error("mock: not a content image ref: '" + std::string(ref) + "'");
    return parse_number(ref.substr(kContentPrefix.size()), ref);
}

// Word banks for synthetic captions. Style descriptions deliberately use
// color words so that a style caption fed through content validation is
// rejected, mirroring real cross-mode leakage.
const char* const kStyles[] = {
    "ukiyo-e",           "art deco",          "cubism",
    "impressionism",     "pop art",           "baroque",
    "art nouveau",       "folk art",          "graphic illustration",
    "chiaroscuro",       "romanticism",       "cyberpunk digital art",
    "digital painting",  "vintage illustration", "retro-futurism",
    "comic book",        "post-impressionism",   "geometric abstraction",
    "steampunk illustration", "botanical illustration", "pixel art",
    "abstract expressionism", "digital collage",      "ink drawing",
};
const char* const kColors[] = {
    "crimson", "azure",    "ochre",    "emerald", "slate",  "ivory",
    "charcoal", "amber",   "teal",     "vermilion", "indigo", "sepia",
};
const char* const kDistributions[] = {"broad washes", "tight gradients", "scattered patches",
                                      "layered bands"};
const char* const kLights[] = {"diffuse", "raking", "high-contrast", "dappled"};
const char* const kMedia[] = {"oil on canvas", "woodblock print", "gouache",
                              "ink wash",      "digital matte",   "tempera",
                              "charcoal sketch", "screen print"};
const char* const kTextures[] = {"coarse tooth",    "smooth gloss", "stippled grain",
                                 "cracked impasto", "soft blur",    "papery matte"};
const char* const kBrushwork[] = {"short choppy strokes", "long flowing strokes",
                                  "angular hatching",     "rounded dabs",
                                  "fine crosshatch",      "broken contour lines"};

const char* const kSubjects[] = {
    "a cat",           "an old fisherman", "a paper lantern", "two children",
    "a stone bridge",  "a market stall",   "a windmill",      "a fox",
    "a sailboat",      "a clockmaker",     "a terraced garden", "a mountain hut",
    "a street musician", "a flock of cranes", "a potter",     "a lighthouse keeper",
};
const char* const kVerbs[] = {"sits beside", "leans against", "stands near", "walks past",
                              "rests under", "watches",       "carries",     "repairs"};
const char* const kObjects[] = {
    "a wooden fence",  "a river bend",     "a tiled rooftop",   "a fruit cart",
    "an iron gate",    "a rope ladder",    "a stack of crates", "a narrow staircase",
    "a canal boat",    "a garden wall",    "a painted sign",    "a water wheel",
    "a bell tower",    "a woven basket",   "a cart wheel",      "a low stone well",
};
const char* const kTails[] = {
    "in the early morning",   "during a quiet afternoon", "as the tide recedes",
    "before the market opens", "while birds gather",      "at the edge of the village",
    "under a wide archway",   "between two tall pillars",
};

template <std::size_t N>
const char* pick(Rng& rng, const char* const (&bank)[N]) {
    return bank[rng.next_below(N)];
}

template <std::size_t N>
std::size_t pick_index(Rng& rng, const char* const (&)[N]) {
    return static_cast<std::size_t>(rng.next_below(N));
}

constexpr u64 kStyleBankTag = 0x57a11e5ull;
constexpr u64 kVariantTag = 0x0a51a7ull;
constexpr u64 kContentTag = 0xc0feca7ull;
constexpr unsigned kVariantsPerClass = 6;

std::string style_caption(u32 cls, u64 index) {
    // Base description is a pure function of the class; the per-image
    // variant shifts exactly one slot, yielding six near-duplicate captions
    // per class.
    Rng base = Rng::substream(kStyleBankTag, cls);
    std::size_t style = pick_index(base, kStyles);
    std::size_t main_color = pick_index(base, kColors);
    std::size_t other_color = pick_index(base, kColors);
    std::size_t dist = pick_index(base, kDistributions);
    std::size_t light = pick_index(base, kLights);
    std::size_t medium = pick_index(base, kMedia);
    std::size_t texture = pick_index(base, kTextures);
    std::size_t brush = pick_index(base, kBrushwork);

    Rng vr = Rng::substream(kVariantTag, (static_cast<u64>(cls) << 32) ^ index);
    switch (vr.next_below(kVariantsPerClass)) {
    case 1: texture = (texture + 1) % std::size(kTextures); break;
    case 2: brush = (brush + 1) % std::size(kBrushwork); break;
    case 3: other_color = (other_color + 1) % std::size(kColors); break;
    case 4: texture = (texture + 2) % std::size(kTextures); break;
    case 5: light = (light + 1) % std::size(kLights); break;
    default: break;
    }

    std::string out = "In the style of ";
    out += kStyles[style];
    out += ", ";
    out += kColors[main_color];
    out += " with ";
    out += kColors[other_color];
    out += " in ";
    out += kDistributions[dist];
    out += ", ";
    out += kLights[light];
    out += " light, ";
    out += kMedia[medium];
    out += ", ";
    out += kTextures[texture];
    out += ", ";
    out += kBrushwork[brush];
    out += ".";
    return out;
}

std::string content_caption(u64 index) {
    Rng rng = Rng::substream(kContentTag, index);
    std::string out = pick(rng, kSubjects);
    out += " ";
    out += pick(rng, kVerbs);
    out += " ";
    out += pick(rng, kObjects);
    out += " ";
    out += pick(rng, kTails);
    out += ".";
    return out;
}

} // namespace

std::vector<PoolImage> make_mock_pool(u32 style_classes, u32 images_per_class,
                                      u32 content_images) {
    std::vector<PoolImage> pool;
    pool.reserve(static_cast<std::size_t>(style_classes) * images_per_class + content_images);
    for (u32 c = 0; c < style_classes; ++c)
        for (u32 i = 0; i < images_per_class; ++i)
            pool.push_back({std::string(kStylePrefix) + std::to_string(c) + "/" +
                                std::to_string(i),
                            PromptKind::Style});
    for (u32 i = 0; i < content_images; ++i)
        pool.push_back({std::string(kContentPrefix) + std::to_string(i), PromptKind::Content});
    return pool;
}

u32 mock_style_class(std::string_view image_ref) { return parse_style_ref(image_ref).cls; }

void write_pool(const std::filesystem::path& path, const std::vector<PoolImage>& pool) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("pool: cannot open " + path.string() + " for writing");
    for (const auto& img : pool) {
        ordered_json row;
        row["image_ref"] = img.image_ref;
        row["kind"] = std::string(kind_name(img.target_kind));
        out << row.dump() << "\n";
    }
    if (!out) throw IoError("pool: write failed for " + path.string());
}

std::vector<PoolImage> read_pool(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pool: cannot open " + path.string());
    std::vector<PoolImage> pool;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json row = ordered_json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object() || !row.contains("image_ref") ||
            !row.contains("kind") || !row["image_ref"].is_string() || !row["kind"].is_string())
            throw IoError("pool: malformed row at line " + std::to_string(line_no) + " of " +
                          path.string());
        PoolImage img;
        img.image_ref = row["image_ref"].get<std::string>();
        img.target_kind = parse_kind(row["kind"].get<std::string>());
        pool.push_back(std::move(img));
    }
    return pool;
}

std::string MockCaptioner::caption(const CaptionRequest& req) {
    if (req.mode == CaptionMode::Style) {
        StyleRef ref = parse_style_ref(req.image_ref);
        return style_caption(ref.cls, ref.index);
    }
    return content_caption(parse_content_ref(req.image_ref));
}

GenerationResult MockGenerator::generate(const GenerationRequest& req,
                                         const std::filesystem::path& out_path) {
    req.validate();
    SplitPrompt parts = split_prompt(req.combined_prompt);
    u64 style_hash = fnv1a64(parts.style);
    u64 arrangement = hash_combine(fnv1a64(parts.content), req.seed);

    const std::size_t npix = static_cast<std::size_t>(req.width) * req.height;
    // Canonical pixel sequence: per-channel Gaussians whose means depend
    // only on the style, so the multiset identifies the style.
    double mean[3], sigma = 36.0;
    for (int c = 0; c < 3; ++c)
        mean[c] = 48.0 + static_cast<double>(((style_hash >> (8 * c)) & 0xff) % 160);
    std::vector<unsigned char> canonical(npix * 3);
    Rng pr = Rng::substream(style_hash, 0x9138ull);
    for (std::size_t i = 0; i < npix; ++i)
        for (int c = 0; c < 3; ++c) {
            double v = mean[c] + sigma * pr.next_normal();
            canonical[3 * i + c] =
                static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
        }

    // Placement: a seeded permutation keyed by (content, seed).
    std::vector<u32> perm(npix);
    std::iota(perm.begin(), perm.end(), 0);
    Rng ar = Rng::substream(arrangement, 0xa77aull);
    for (std::size_t i = 0; i < npix; ++i) {
        std::size_t j = i + ar.next_below(npix - i);
        std::swap(perm[i], perm[j]);
    }

    PpmImage img;
    img.width = req.width;
    img.height = req.height;
    img.pixels.resize(npix * 3);
    for (std::size_t i = 0; i < npix; ++i)
        for (int c = 0; c < 3; ++c) img.pixels[3 * i + c] = canonical[3 * perm[i] + c];
    write_ppm(out_path, img);

    GenerationResult res;
    res.status = GenStatus::Done;
    res.image_ref = out_path.string();
    return res;
}

std::vector<float> mock_image_feature(const PpmImage& img) {
    constexpr u32 bins = kMockFeatureDim / 3;
    std::vector<double> hist(kMockFeatureDim, 0.0);
    const std::size_t npix = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < npix; ++i)
        for (int c = 0; c < 3; ++c)
            hist[static_cast<u32>(c) * bins + img.pixels[3 * i + c] / (256 / bins)] += 1.0;
    double norm2 = 0.0;
    for (double v : hist) norm2 += v * v;
    if (norm2 == 0.0) throw Error("mock feature: empty image");
    double inv = 1.0 / std::sqrt(norm2);
    std::vector<float> out(kMockFeatureDim);
    for (u32 d = 0; d < kMockFeatureDim; ++d) out[d] = static_cast<float>(hist[d] * inv);
    return out;
}

EmbeddingMatrix mock_image_features(const std::vector<std::string>& image_paths) {
    EmbeddingMatrix m(static_cast<u32>(image_paths.size()), kMockFeatureDim);
    for (std::size_t i = 0; i < image_paths.size(); ++i) {
        std::vector<float> f = mock_image_feature(read_ppm(image_paths[i]));
        std::copy(f.begin(), f.end(), m.row(i));
    }
    return l2_normalize(m); // rows are unit norm already; this pins the flag
}

EmbeddingMatrix mock_text_embeddings(const std::vector<std::string>& texts, u32 dim,
                                     u64 seed) {
    if (dim == 0) throw Error("mock embedder: dim must be >= 1");
    EmbeddingMatrix m(static_cast<u32>(texts.size()), dim);
    std::vector<double> acc(dim);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::string token;
        bool any = false;
        auto flush = [&]() {
            if (token.empty()) return;
            any = true;
            Rng rng = Rng::substream(seed, fnv1a64(token));
            for (u32 d = 0; d < dim; ++d) acc[d] += rng.next_normal();
            token.clear();
        };
        for (char c : texts[i]) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            else
                flush();
        }
        flush();
        if (!any)
            throw Error("mock embedder: no tokens in row " + std::to_string(i));
        for (u32 d = 0; d < dim; ++d) m.row(i)[d] = static_cast<float>(acc[d]);
    }
    return l2_normalize(m);
}

} // namespace megacurate
