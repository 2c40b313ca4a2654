#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "megacurate/embedding.hpp"
#include "megacurate/image.hpp"
#include "megacurate/record.hpp"

namespace megacurate {

enum class CaptionMode { Style, Content };

std::string_view caption_mode_name(CaptionMode m);
CaptionMode parse_caption_mode(std::string_view name);

// A captioning instruction template. `version` is the 16-hex-digit hash of
// the text, so a template edit changes every id derived from it.
struct InstructionTemplate {
    std::string name;
    std::string version;
    std::string text;

    std::string id() const { return name + "@" + version; }
};

const InstructionTemplate& style_template();
const InstructionTemplate& content_template();
const InstructionTemplate& template_for(CaptionMode mode);
// Throws Error for ids this build does not ship.
const InstructionTemplate& template_by_id(std::string_view id);

struct CaptionRequest {
    std::string image_ref;
    CaptionMode mode = CaptionMode::Style;
    std::string template_id;
};

struct GenerationRequest {
    std::string combined_prompt;
    u32 steps = 40;
    double cfg_scale = 4.0;
    u32 seed = 0;
    u32 width = 64;
    u32 height = 64;

    void validate() const; // steps >= 1, cfg_scale > 0, nonzero resolution
};

struct ServiceEndpoint {
    std::string base_url;
    std::string token_env; // name of the env var holding the bearer token
    double timeout_seconds = 30.0;
    u32 max_retries = 2;
    double backoff_seconds = 0.25; // initial; doubles per retry

    void validate() const;
};

// Endpoints configured through MEGACURATE_CAPTION_URL / MEGACURATE_GEN_URL
// (token env-var name via MEGACURATE_TOKEN_VAR); nullopt when unset.
std::optional<ServiceEndpoint> caption_endpoint_from_env();
std::optional<ServiceEndpoint> generation_endpoint_from_env();

struct GenerationResult {
    GenStatus status = GenStatus::Failed;
    std::string image_ref; // set when Done
    std::string error;     // set when Failed
};

// Service boundaries. Implementations throw Error for transport-level
// failures; a service-level refusal comes back as a Failed result.
class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const CaptionRequest& req) = 0;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual GenerationResult generate(const GenerationRequest& req,
                                      const std::filesystem::path& out_path) = 0;
};

// Style words that must not appear in a content caption (lowercase,
// matched against lowercased word tokens).
const std::vector<std::string>& default_banned_lexicon();

// Lexical output check: Style captions must carry the template's
// "In the style of" skeleton prefix; Content captions must avoid the
// banned lexicon. Returns a diagnostic, or nullopt when valid.
std::optional<std::string> validate_caption(CaptionMode mode, std::string_view text,
                                            const std::vector<std::string>& banned_lexicon);

// ---------------------------------------------------------------------------
// Offline mock world: a synthetic image pool plus deterministic caption /
// generation / embedding stand-ins, so the whole pipeline runs with zero
// network access.

struct PoolImage {
    std::string image_ref;
    PromptKind target_kind = PromptKind::Style; // which prompt pool it feeds

    bool operator==(const PoolImage&) const = default;
};

void write_pool(const std::filesystem::path& path, const std::vector<PoolImage>& pool);
std::vector<PoolImage> read_pool(const std::filesystem::path& path);

// Synthetic refs: mock://style/<class>/<index> and mock://content/<index>.
std::vector<PoolImage> make_mock_pool(u32 style_classes, u32 images_per_class,
                                      u32 content_images);
u32 mock_style_class(std::string_view image_ref); // throws Error on non-style refs

// Deterministic captions from the ref alone: a style image's caption is one
// of six template-conformant variants of its class's base description; a
// content image's caption is a color-free object sentence.
class MockCaptioner : public Captioner {
public:
    std::string caption(const CaptionRequest& req) override;
};

// Deterministic procedural images: the pixel multiset is a function of the
// style text only; content and seed merely permute pixel placement. Same
// (style, content, seed) is byte-identical.
class MockGenerator : public Generator {
public:
    GenerationResult generate(const GenerationRequest& req,
                              const std::filesystem::path& out_path) override;
};

inline constexpr u32 kMockFeatureDim = 48; // 16 histogram bins x 3 channels

// Permutation-invariant pixel statistics, L2-normalized: images sharing a
// pixel multiset get identical features.
std::vector<float> mock_image_feature(const PpmImage& img);
EmbeddingMatrix mock_image_features(const std::vector<std::string>& image_paths);

// Bag-of-tokens hashed embedding, L2-normalized; token overlap shows up as
// cosine similarity. Throws Error on rows with no tokens.
EmbeddingMatrix mock_text_embeddings(const std::vector<std::string>& texts, u32 dim = 64,
                                     u64 seed = 0x7e87);

// ---------------------------------------------------------------------------
// HTTP adapters (JSON over HTTP; see README for the wire schema).

class HttpCaptioner : public Captioner {
public:
    explicit HttpCaptioner(ServiceEndpoint ep);
    std::string caption(const CaptionRequest& req) override;

private:
    ServiceEndpoint ep_;
};

class HttpGenerator : public Generator {
public:
    explicit HttpGenerator(ServiceEndpoint ep);
    GenerationResult generate(const GenerationRequest& req,
                              const std::filesystem::path& out_path) override;

private:
    ServiceEndpoint ep_;
};

// ---------------------------------------------------------------------------
// Batch drivers: bounded request parallelism, results committed in
// request-id order, every failure persisted.

struct CaptionFailure {
    std::string image_ref;
    CaptionMode mode = CaptionMode::Style;
    std::string error;
};

struct CaptionOptions {
    std::string source_tag = "caption";
    std::vector<std::string> banned_lexicon = default_banned_lexicon();
    unsigned max_in_flight = 8;
    bool retry_on_invalid = false; // one re-request after a validation reject
};

struct CaptionRunResult {
    std::vector<PromptRecord> prompts; // ids assigned in pool order
    std::vector<CaptionFailure> failures;
    std::string template_id;
};

// Captions every pool image whose target kind matches `mode`. Record ids
// are derived from (source_tag + template version, position), so re-runs
// over the same pool and template reproduce identical ids.
CaptionRunResult run_captioning(Captioner& captioner, const std::vector<PoolImage>& pool,
                                CaptionMode mode, const CaptionOptions& opt);

struct GenerateOptions {
    std::filesystem::path out_dir;
    u32 steps = 40;
    double cfg_scale = 4.0;
    u32 width = 64;
    u32 height = 64;
    unsigned max_in_flight = 8;
    bool resume = true; // skip rows already Done
};

struct GenerateSummary {
    u64 done = 0;
    u64 failed = 0;
    u64 skipped = 0;
};

// Composes each combination's prompt from the style/content pools, runs the
// generator, and updates status plus provenance (image_ref/steps/cfg_scale
// on success, error text on failure) in place. Throws IntegrityError if a
// combination references an id missing from the pools.
GenerateSummary run_generation(Generator& generator, std::vector<StyleCombination>& combos,
                               const std::vector<PromptRecord>& styles,
                               const std::vector<PromptRecord>& contents,
                               const GenerateOptions& opt);

} // namespace megacurate
