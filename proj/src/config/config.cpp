#include <algorithm>
#include <limits>
#include <set>
#include <sstream>

#include "megacurate/config.hpp"

namespace megacurate {

namespace {

// Walks known keys over the parsed document, collecting problems (or
// throwing on the first when no sink is given) and marking keys as used so
// leftovers can be reported as unknown.
struct Binder {
    const TomlDocument& doc;
    std::vector<std::string>* diags;
    std::set<std::pair<std::string, std::string>> used;

    void report(const std::string& path, const std::string& msg) {
        if (diags)
            diags->push_back(path + ": " + msg);
        else
            throw ConfigError(path + ": " + msg);
    }

    static std::string dotted(const std::string& section, const std::string& key) {
        return section.empty() ? key : section + "." + key;
    }

    const TomlValue* take(const std::string& section, const std::string& key) {
        const TomlValue* v = doc.find(section, key);
        if (v) used.insert({section, key});
        return v;
    }

    void bind_string(const std::string& sec, const std::string& key, std::string& out) {
        if (const TomlValue* v = take(sec, key)) {
            if (v->kind != TomlValue::Kind::String)
                report(dotted(sec, key), "expected a string");
            else
                out = v->text;
        }
    }

    void bind_bool(const std::string& sec, const std::string& key, bool& out) {
        if (const TomlValue* v = take(sec, key)) {
            if (v->kind != TomlValue::Kind::Boolean)
                report(dotted(sec, key), "expected true or false");
            else
                out = v->boolean;
        }
    }

    void bind_double(const std::string& sec, const std::string& key, double& out) {
        if (const TomlValue* v = take(sec, key)) {
            if (v->kind != TomlValue::Kind::Float && v->kind != TomlValue::Kind::Integer)
                report(dotted(sec, key), "expected a number");
            else
                out = v->real;
        }
    }

    template <typename T>
    void bind_uint(const std::string& sec, const std::string& key, T& out) {
        if (const TomlValue* v = take(sec, key)) {
            if (v->kind != TomlValue::Kind::Integer)
                report(dotted(sec, key), "expected an integer");
            else if (v->integer < 0)
                report(dotted(sec, key), "must not be negative");
            else if (static_cast<u64>(v->integer) > std::numeric_limits<T>::max())
                report(dotted(sec, key), "value out of range");
            else
                out = static_cast<T>(v->integer);
        }
    }

    template <typename T>
    void bind_uint_list(const std::string& sec, const std::string& key,
                        std::vector<T>& out) {
        if (const TomlValue* v = take(sec, key)) {
            if (v->kind != TomlValue::Kind::Array) {
                report(dotted(sec, key), "expected an array of integers");
                return;
            }
            std::vector<T> parsed;
            for (const TomlValue& item : v->items) {
                if (item.kind != TomlValue::Kind::Integer || item.integer < 0 ||
                    static_cast<u64>(item.integer) > std::numeric_limits<T>::max()) {
                    report(dotted(sec, key), "expected an array of non-negative integers");
                    return;
                }
                parsed.push_back(static_cast<T>(item.integer));
            }
            out = std::move(parsed);
        }
    }

    void finish() {
        for (const auto& [section, keys] : doc.sections)
            for (const auto& [key, value] : keys)
                if (!used.count({section, key}))
                    report(dotted(section, key), "unknown key");
    }
};

void check(std::vector<std::string>& diags, bool ok, const std::string& path,
           const std::string& msg) {
    if (!ok) diags.push_back(path + ": " + msg);
}

} // namespace

PipelineConfig config_from_document(const TomlDocument& doc,
                                    std::vector<std::string>* diagnostics) {
    PipelineConfig cfg;
    Binder b{doc, diagnostics, {}};

    std::string workspace = cfg.workspace.string();
    b.bind_string("", "workspace", workspace);
    cfg.workspace = workspace;
    b.bind_uint("", "seed", cfg.seed);

    b.bind_uint("dedup", "shingle_size", cfg.dedup.shingle_size);
    b.bind_uint("dedup", "num_hashes", cfg.dedup.num_hashes);
    b.bind_uint("dedup", "lsh_bands", cfg.dedup.lsh_bands);
    b.bind_double("dedup", "jaccard", cfg.dedup.jaccard_threshold);
    b.bind_double("dedup", "semantic", cfg.dedup.semantic_threshold);
    b.bind_uint("dedup", "seed", cfg.dedup.seed);

    b.bind_uint_list("balance", "levels", cfg.balance.kmeans.levels);
    b.bind_uint("balance", "max_iters", cfg.balance.kmeans.max_iters);
    b.bind_double("balance", "tol", cfg.balance.kmeans.tol);
    b.bind_uint("balance", "budget", cfg.balance.budget);

    b.bind_uint("pairing", "contents_per_style", cfg.pairing.n_contents_per_style);
    b.bind_bool("pairing", "allow_content_reuse",
                cfg.pairing.allow_content_reuse_across_styles);

    b.bind_bool("sscl", "enabled", cfg.sscl.enabled);
    b.bind_double("sscl", "tau", cfg.sscl.train.tau);
    b.bind_double("sscl", "lr", cfg.sscl.train.lr);
    b.bind_double("sscl", "weight_decay", cfg.sscl.train.weight_decay);
    b.bind_uint("sscl", "epochs", cfg.sscl.train.epochs);
    b.bind_uint("sscl", "batch_size", cfg.sscl.train.batch_size);
    b.bind_double("sscl", "itc_weight", cfg.sscl.train.itc_weight);
    b.bind_bool("sscl", "instance_pairing", cfg.sscl.train.instance_pairing);
    b.bind_uint("sscl", "embed_dim", cfg.sscl.embed_dim);

    b.bind_uint("retrieval", "queries_per_style", cfg.retrieval.queries_per_style);
    b.bind_uint_list("retrieval", "ks", cfg.retrieval.ks);

    b.bind_bool("clients", "mock", cfg.clients.mock);
    b.bind_string("clients", "caption_url", cfg.clients.caption_url);
    b.bind_string("clients", "generation_url", cfg.clients.generation_url);
    b.bind_string("clients", "token_env", cfg.clients.token_env);
    b.bind_double("clients", "timeout_seconds", cfg.clients.timeout_seconds);
    b.bind_uint("clients", "max_retries", cfg.clients.max_retries);
    b.bind_double("clients", "backoff_seconds", cfg.clients.backoff_seconds);
    b.bind_uint("clients", "max_in_flight", cfg.clients.max_in_flight);

    b.bind_uint("generation", "steps", cfg.generation.steps);
    b.bind_double("generation", "cfg_scale", cfg.generation.cfg_scale);
    b.bind_uint("generation", "width", cfg.generation.width);
    b.bind_uint("generation", "height", cfg.generation.height);

    b.bind_uint("mock_pool", "style_classes", cfg.mock_pool.style_classes);
    b.bind_uint("mock_pool", "images_per_class", cfg.mock_pool.images_per_class);
    b.bind_uint("mock_pool", "content_images", cfg.mock_pool.content_images);

    b.finish();
    return cfg;
}

std::vector<std::string> validate_pipeline_config(const PipelineConfig& cfg) {
    std::vector<std::string> d;

    check(d, !cfg.workspace.empty(), "workspace", "must not be empty");

    check(d, cfg.dedup.shingle_size >= 1, "dedup.shingle_size", "must be >= 1");
    check(d, cfg.dedup.num_hashes >= 1, "dedup.num_hashes", "must be >= 1");
    check(d, cfg.dedup.lsh_bands >= 1, "dedup.lsh_bands", "must be >= 1");
    if (cfg.dedup.lsh_bands >= 1)
        check(d, cfg.dedup.num_hashes % cfg.dedup.lsh_bands == 0, "dedup.lsh_bands",
              "must divide num_hashes evenly");
    check(d, cfg.dedup.jaccard_threshold > 0.0 && cfg.dedup.jaccard_threshold <= 1.0,
          "dedup.jaccard", "must lie in (0, 1]");
    check(d, cfg.dedup.semantic_threshold > 0.0 && cfg.dedup.semantic_threshold <= 1.0,
          "dedup.semantic", "must lie in (0, 1]");

    const auto& levels = cfg.balance.kmeans.levels;
    check(d, !levels.empty(), "balance.levels", "must not be empty");
    bool levels_ok = !levels.empty();
    for (std::size_t i = 0; i < levels.size() && levels_ok; ++i)
        levels_ok = levels[i] >= 1;
    for (std::size_t i = 1; i < levels.size() && levels_ok; ++i)
        levels_ok = levels[i] < levels[i - 1];
    if (!levels.empty())
        check(d, levels_ok, "balance.levels",
              "must be strictly decreasing positive cluster counts");
    check(d, cfg.balance.kmeans.max_iters >= 1, "balance.max_iters", "must be >= 1");
    check(d, cfg.balance.kmeans.tol >= 0.0, "balance.tol", "must be >= 0");
    check(d, cfg.balance.budget >= 1, "balance.budget", "must be >= 1");

    check(d, cfg.pairing.n_contents_per_style >= 1, "pairing.contents_per_style",
          "must be >= 1");

    check(d, cfg.sscl.train.tau > 0.0, "sscl.tau", "must be > 0");
    check(d, cfg.sscl.train.lr >= 0.0, "sscl.lr", "must be >= 0");
    check(d, cfg.sscl.train.weight_decay >= 0.0 && cfg.sscl.train.weight_decay < 1.0,
          "sscl.weight_decay", "must lie in [0, 1)");
    check(d, cfg.sscl.train.epochs >= 1, "sscl.epochs", "must be >= 1");
    check(d, cfg.sscl.train.batch_size >= 2, "sscl.batch_size", "must be >= 2");
    check(d, cfg.sscl.train.itc_weight >= 0.0, "sscl.itc_weight", "must be >= 0");
    check(d, cfg.sscl.embed_dim >= 1, "sscl.embed_dim", "must be >= 1");

    check(d, cfg.retrieval.queries_per_style >= 1, "retrieval.queries_per_style",
          "must be >= 1");
    check(d, !cfg.retrieval.ks.empty(), "retrieval.ks", "must not be empty");
    for (u32 k : cfg.retrieval.ks)
        if (k == 0) {
            check(d, false, "retrieval.ks", "every k must be >= 1");
            break;
        }

    if (!cfg.clients.mock) {
        check(d, !cfg.clients.caption_url.empty(), "clients.caption_url",
              "required unless clients.mock = true");
        check(d, !cfg.clients.generation_url.empty(), "clients.generation_url",
              "required unless clients.mock = true");
    }
    check(d, cfg.clients.timeout_seconds > 0.0, "clients.timeout_seconds", "must be > 0");
    check(d, cfg.clients.backoff_seconds >= 0.0, "clients.backoff_seconds", "must be >= 0");
    check(d, cfg.clients.max_in_flight >= 1, "clients.max_in_flight", "must be >= 1");

    check(d, cfg.generation.steps >= 1, "generation.steps", "must be >= 1");
    check(d, cfg.generation.cfg_scale > 0.0, "generation.cfg_scale", "must be > 0");
    check(d, cfg.generation.width >= 1, "generation.width", "must be >= 1");
    check(d, cfg.generation.height >= 1, "generation.height", "must be >= 1");

    check(d, cfg.mock_pool.style_classes >= 1, "mock_pool.style_classes", "must be >= 1");
    check(d, cfg.mock_pool.images_per_class >= 1, "mock_pool.images_per_class",
          "must be >= 1");
    check(d, cfg.mock_pool.content_images >= 1, "mock_pool.content_images",
          "must be >= 1");

    return d;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    TomlDocument doc = parse_toml_file(path);
    std::vector<std::string> diags;
    PipelineConfig cfg = config_from_document(doc, &diags);
    std::vector<std::string> semantic = validate_pipeline_config(cfg);
    diags.insert(diags.end(), semantic.begin(), semantic.end());
    if (!diags.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": " << diags.size()
            << (diags.size() == 1 ? " problem:" : " problems:");
        for (const std::string& diag : diags) msg << "\n  " << diag;
        throw ConfigError(msg.str());
    }
    return cfg;
}

std::vector<std::string> validate_config_file(const std::filesystem::path& path) {
    TomlDocument doc = parse_toml_file(path);
    std::vector<std::string> diags;
    PipelineConfig cfg = config_from_document(doc, &diags);
    std::vector<std::string> semantic = validate_pipeline_config(cfg);
    diags.insert(diags.end(), semantic.begin(), semantic.end());
    return diags;
}

void apply_demo_scale(PipelineConfig& cfg) {
    cfg.clients.mock = true;
    cfg.mock_pool = {20, 10, 40};           // 200 synthetic style images
    cfg.balance.kmeans.levels = {24, 12, 6, 3};
    cfg.balance.budget = 60;                // below the survivor count, so the
                                            // sampler actually has to choose
    cfg.pairing.n_contents_per_style = 8;
    cfg.retrieval.queries_per_style = 4;    // 4-query / 4-gallery per style
}

} // namespace megacurate
