#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "megacurate/balance.hpp"
#include "megacurate/dedup.hpp"
#include "megacurate/pairing.hpp"
#include "megacurate/sscl.hpp"

namespace megacurate {

// ---------------------------------------------------------------------------
// Config file parsing: a minimal TOML subset — `# comments`, one level of
// `[section]` headers, and `key = value` lines with strings, integers,
// floats, booleans, and flat arrays.

struct TomlValue {
    enum class Kind { String, Integer, Float, Boolean, Array };
    Kind kind = Kind::Integer;
    std::string text;             // String
    i64 integer = 0;              // Integer
    double real = 0.0;            // Float; mirrors `integer` for integers
    bool boolean = false;         // Boolean
    std::vector<TomlValue> items; // Array
};

struct TomlDocument {
    // Section "" holds keys that appear before any header.
    std::map<std::string, std::map<std::string, TomlValue>> sections;

    const TomlValue* find(std::string_view section, std::string_view key) const;
};

// Throws ConfigError with <source>:<line> context on syntax errors,
// duplicate keys, or reopened sections.
TomlDocument parse_toml(std::string_view text, const std::string& source);
TomlDocument parse_toml_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pipeline configuration: one struct per stage plus client plumbing. Field
// defaults are the shipped defaults; the checked-in defaults file restates
// them so the two cannot drift unnoticed (a test compares them).

struct BalanceStageConfig {
    KMeansConfig kmeans;
    u64 budget = 170000;
};

struct SsclStageConfig {
    bool enabled = true;
    SsclConfig train;
    u32 embed_dim = 64; // text-embedding width; also the head's output dim
};

struct RetrievalStageConfig {
    u32 queries_per_style = 4;
    std::vector<u32> ks = {1, 10};
};

struct ClientsConfig {
    bool mock = true; // offline by default; real services need both URLs
    std::string caption_url;
    std::string generation_url;
    std::string token_env = "MEGACURATE_TOKEN";
    double timeout_seconds = 30.0;
    u32 max_retries = 2;
    double backoff_seconds = 0.25;
    u32 max_in_flight = 8;
};

struct GenerationStageConfig {
    u32 steps = 40;
    double cfg_scale = 4.0;
    u32 width = 64;
    u32 height = 64;
};

struct MockPoolConfig {
    u32 style_classes = 20;
    u32 images_per_class = 10;
    u32 content_images = 40;
};

struct PipelineConfig {
    std::filesystem::path workspace = "work";
    u64 seed = 7; // balance sampling, pairing, sscl, and split draws
    DedupConfig dedup;
    BalanceStageConfig balance;
    PairingConfig pairing;
    SsclStageConfig sscl;
    RetrievalStageConfig retrieval;
    ClientsConfig clients;
    GenerationStageConfig generation;
    MockPoolConfig mock_pool;
};

// Binds a parsed document onto the defaults. Unknown keys, type mismatches,
// and out-of-range scalars become diagnostics; when `diagnostics` is null
// the first problem throws ConfigError instead.
PipelineConfig config_from_document(const TomlDocument& doc,
                                    std::vector<std::string>* diagnostics);

// Semantic checks across the bound struct; each violation is reported as
// "<dotted.path>: <problem>" (e.g. "sscl.tau: must be > 0").
std::vector<std::string> validate_pipeline_config(const PipelineConfig& cfg);

// Parse + bind + validate; throws ConfigError listing every diagnostic.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Parse + bind + validate without throwing on diagnostics (only unreadable
// or syntactically broken files throw). Empty result means the file is
// valid.
std::vector<std::string> validate_config_file(const std::filesystem::path& path);

// Shrinks every stage to the synthetic end-to-end demo size (20 style
// classes x 10 images, 40 content images) and forces mock clients.
void apply_demo_scale(PipelineConfig& cfg);

} // namespace megacurate
