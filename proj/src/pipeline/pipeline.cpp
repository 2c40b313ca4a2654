#include "megacurate/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <utility>

#include <json.hpp>

#include "megacurate/hash.hpp"
#include "megacurate/log.hpp"
#include "megacurate/manifest_io.hpp"
#include "megacurate/retrieval.hpp"
#include "../clients/clients_internal.hpp"

namespace megacurate {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Text-embedding width for the prompt pools (dedup lives in this space).
constexpr u32 kPromptEmbedDim = 64;

std::string hash_of_string(const std::string& s) {
    return detail::hex16(fnv1a64(s));
}

// Restores the default stderr sink when a stage scope ends.
struct SinkReset {
    ~SinkReset() { set_warn_sink({}); }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Runner {
public:
    explicit Runner(const PipelineConfig& cfg) : cfg_(cfg), ws_(cfg.workspace) {}

    RunLedger run();

private:
    const PipelineConfig& cfg_;
    fs::path ws_;
    RunLedger previous_; // ledger found on disk, if any
    RunLedger current_;  // stages processed by this run, in order

    fs::path p(std::string_view name) const { return ws_ / name; }

    // This run's records first, then prior records for stages this run has
    // not reached (yet, or at all), so a failure or a disabled stage does
    // not erase skip evidence.
    RunLedger combined() const {
        RunLedger out = current_;
        for (const auto& rec : previous_.stages) {
            if (!out.find(rec.name)) out.stages.push_back(rec);
        }
        return out;
    }

    void persist() const { write_run_ledger(p("ledger.json"), combined()); }

    void commit(StageRecord rec) {
        std::cerr << rec.name << ": "
                  << (rec.status == RunStatus::Failed ? "failed"
                      : rec.skipped                   ? "up to date"
                                                      : "done")
                  << " (" << rec.wall_seconds << "s)\n";
        current_.stages.push_back(std::move(rec));
        persist();
    }

    // Runs one stage unless its inputs hash to the previous run's entry and
    // its outputs verify; records the outcome either way.
    void stage(const std::string& name, const std::vector<fs::path>& inputs,
               const ordered_json& fingerprint, const std::vector<fs::path>& outputs,
               const std::function<void()>& body);

    ServiceEndpoint endpoint(const std::string& url) const;
    std::unique_ptr<Captioner> make_captioner() const;
    std::unique_ptr<Generator> make_generator() const;

    ordered_json generate_fingerprint() const;

    void stage_caption();
    void stage_dedup();
    void stage_balance();
    void stage_pair();
    void stage_generate();
    void stage_sscl();
    void stage_retrieval();
};

void Runner::stage(const std::string& name, const std::vector<fs::path>& inputs,
                   const ordered_json& fingerprint, const std::vector<fs::path>& outputs,
                   const std::function<void()>& body) {
    StageRecord rec;
    rec.name = name;
    const auto t0 = std::chrono::steady_clock::now();

    // log_warn serializes sink calls, so the capture needs no extra lock.
    SinkReset reset;
    set_warn_sink([&rec](const std::string& msg) {
        rec.warnings.push_back(msg);
        std::cerr << "warning: " << msg << "\n";
    });

    try {
        rec.input_hashes["config"] = hash_of_string(fingerprint.dump());
        for (const auto& f : inputs) rec.input_hashes[f.filename().string()] = file_hash_hex(f);

        const StageRecord* prev = previous_.find(name);
        const bool inputs_match = prev && prev->status == RunStatus::Done &&
                                  prev->input_hashes == rec.input_hashes;
        const bool outputs_exist =
            std::all_of(outputs.begin(), outputs.end(), [](const fs::path& f) {
                return fs::exists(f);
            });

        if (inputs_match && outputs_exist) {
            for (const auto& f : outputs) {
                const std::string base = f.filename().string();
                const std::string h = file_hash_hex(f);
                auto it = prev->output_hashes.find(base);
                if (it == prev->output_hashes.end() || it->second != h)
                    throw IntegrityError("stage " + name + ": output " + base +
                                         " does not match the ledger (hash mismatch)");
                rec.output_hashes[base] = h;
            }
            rec.skipped = true;
            rec.status = RunStatus::Done;
            rec.wall_seconds = seconds_since(t0);
            commit(std::move(rec));
            return;
        }

        body();

        for (const auto& f : outputs) rec.output_hashes[f.filename().string()] = file_hash_hex(f);
        rec.status = RunStatus::Done;
        rec.wall_seconds = seconds_since(t0);
        commit(std::move(rec));
    } catch (const std::exception& e) {
        rec.status = RunStatus::Failed;
        rec.skipped = false;
        rec.error = e.what();
        rec.output_hashes.clear();
        rec.wall_seconds = seconds_since(t0);
        commit(std::move(rec));
        throw;
    }
}

ServiceEndpoint Runner::endpoint(const std::string& url) const {
    ServiceEndpoint ep;
    ep.base_url = url;
    ep.token_env = cfg_.clients.token_env;
    ep.timeout_seconds = cfg_.clients.timeout_seconds;
    ep.max_retries = cfg_.clients.max_retries;
    ep.backoff_seconds = cfg_.clients.backoff_seconds;
    return ep;
}

std::unique_ptr<Captioner> Runner::make_captioner() const {
    if (cfg_.clients.mock) return std::make_unique<MockCaptioner>();
    return std::make_unique<HttpCaptioner>(endpoint(cfg_.clients.caption_url));
}

std::unique_ptr<Generator> Runner::make_generator() const {
    if (cfg_.clients.mock) return std::make_unique<MockGenerator>();
    return std::make_unique<HttpGenerator>(endpoint(cfg_.clients.generation_url));
}

void Runner::stage_caption() {
    ordered_json fp;
    fp["mock"] = cfg_.clients.mock;
    if (!cfg_.clients.mock) fp["caption_url"] = cfg_.clients.caption_url;
    fp["style_template"] = style_template().id();
    fp["content_template"] = content_template().id();
    fp["embed_dim"] = kPromptEmbedDim;

    stage("caption", {p("pool.jsonl")}, fp,
          {p("style_prompts.jsonl"), p("style_prompts.mgse"), p("style_failures.jsonl"),
           p("content_prompts.jsonl"), p("content_prompts.mgse"), p("content_failures.jsonl")},
          [&] {
              const std::vector<PoolImage> pool = read_pool(p("pool.jsonl"));
              auto captioner = make_captioner();
              CaptionOptions opt;
              opt.max_in_flight = cfg_.clients.max_in_flight;

              auto run_mode = [&](CaptionMode mode, const std::string& base) {
                  CaptionRunResult res = run_captioning(*captioner, pool, mode, opt);
                  if (!res.failures.empty())
                      log_warn("caption: " + std::to_string(res.failures.size()) + " " +
                               std::string(caption_mode_name(mode)) + " captions failed");
                  std::vector<std::string> texts;
                  texts.reserve(res.prompts.size());
                  for (std::size_t i = 0; i < res.prompts.size(); ++i) {
                      res.prompts[i].embedding_row = static_cast<u32>(i);
                      texts.push_back(res.prompts[i].text);
                  }
                  EmbeddingMatrix emb = mock_text_embeddings(texts, kPromptEmbedDim);
                  Manifest m;
                  m.stage = Stage::Raw;
                  m.prompts = std::move(res.prompts);
                  m.finalize();
                  write_manifest(p(base + "_prompts.jsonl"), m);
                  write_mgse(p(base + "_prompts.mgse"), emb);
                  write_caption_failures(p(base + "_failures.jsonl"), res.failures);
              };
              run_mode(CaptionMode::Style, "style");
              run_mode(CaptionMode::Content, "content");
          });
}

void Runner::stage_dedup() {
    ordered_json fp;
    fp["shingle_size"] = cfg_.dedup.shingle_size;
    fp["num_hashes"] = cfg_.dedup.num_hashes;
    fp["lsh_bands"] = cfg_.dedup.lsh_bands;
    fp["jaccard"] = cfg_.dedup.jaccard_threshold;
    fp["semantic"] = cfg_.dedup.semantic_threshold;
    fp["seed"] = cfg_.dedup.seed;

    stage("dedup",
          {p("style_prompts.jsonl"), p("style_prompts.mgse"), p("content_prompts.jsonl"),
           p("content_prompts.mgse")},
          fp,
          {p("deduped_styles.jsonl"), p("deduped_styles.mgse"), p("dedup_style_groups.jsonl"),
           p("deduped_contents.jsonl"), p("deduped_contents.mgse"),
           p("dedup_content_groups.jsonl")},
          [&] {
              auto run_pool = [&](const std::string& in_base, const std::string& out_name,
                                  const std::string& groups_name) {
                  Manifest m = read_manifest(p(in_base + "_prompts.jsonl"));
                  EmbeddingMatrix emb = read_mgse(p(in_base + "_prompts.mgse"));
                  ManifestDedup res = dedup_manifest(m, emb, cfg_.dedup);
                  write_manifest(p(out_name + ".jsonl"), res.manifest);
                  write_mgse(p(out_name + ".mgse"), res.embeddings);
                  write_dedup_groups(p(groups_name), res.groups);
              };
              run_pool("style", "deduped_styles", "dedup_style_groups.jsonl");
              run_pool("content", "deduped_contents", "dedup_content_groups.jsonl");
          });
}

void Runner::stage_balance() {
    ordered_json fp;
    fp["levels"] = cfg_.balance.kmeans.levels;
    fp["max_iters"] = cfg_.balance.kmeans.max_iters;
    fp["tol"] = cfg_.balance.kmeans.tol;
    fp["budget"] = cfg_.balance.budget;
    fp["seed"] = cfg_.seed;

    stage("balance", {p("deduped_styles.jsonl"), p("deduped_styles.mgse"),
                      p("deduped_contents.jsonl")},
          fp, {p("balanced_styles.jsonl"), p("balanced_contents.jsonl"), p("balance_report.json")},
          [&] {
              Manifest styles = read_manifest(p("deduped_styles.jsonl"));
              EmbeddingMatrix emb = read_mgse(p("deduped_styles.mgse"));

              KMeansConfig km = cfg_.balance.kmeans;
              ManifestBalance res =
                  balance_manifest(styles, emb, km, cfg_.balance.budget, cfg_.seed);
              write_manifest(p("balanced_styles.jsonl"), res.manifest);

              Manifest contents = read_manifest(p("deduped_contents.jsonl"));
              contents.stage = Stage::Balanced;
              for (auto& r : contents.prompts) r.embedding_row.reset();
              write_manifest(p("balanced_contents.jsonl"), contents);

              write_balance_report_json(p("balance_report.json"), res.effective_budget,
                                        res.sample, res.report);
          });
}

void Runner::stage_pair() {
    ordered_json fp;
    fp["contents_per_style"] = cfg_.pairing.n_contents_per_style;
    fp["allow_content_reuse"] = cfg_.pairing.allow_content_reuse_across_styles;
    fp["seed"] = cfg_.seed;

    stage("pair", {p("balanced_styles.jsonl"), p("balanced_contents.jsonl")}, fp,
          {p("pairs.jsonl")}, [&] {
              Manifest styles = read_manifest(p("balanced_styles.jsonl"));
              Manifest contents = read_manifest(p("balanced_contents.jsonl"));
              PairingConfig pc = cfg_.pairing;
              pc.seed = cfg_.seed;
              Manifest out;
              out.stage = Stage::Paired;
              out.combinations = make_combinations(styles.prompts, contents.prompts, pc);
              out.finalize();
              write_manifest(p("pairs.jsonl"), out);
          });
}

ordered_json Runner::generate_fingerprint() const {
    ordered_json fp;
    fp["mock"] = cfg_.clients.mock;
    if (!cfg_.clients.mock) fp["generation_url"] = cfg_.clients.generation_url;
    fp["steps"] = cfg_.generation.steps;
    fp["cfg_scale"] = cfg_.generation.cfg_scale;
    fp["width"] = cfg_.generation.width;
    fp["height"] = cfg_.generation.height;
    return fp;
}

void Runner::stage_generate() {
    const ordered_json fp = generate_fingerprint();

    stage("generate",
          {p("pairs.jsonl"), p("balanced_styles.jsonl"), p("balanced_contents.jsonl")}, fp,
          {p("generated.jsonl"), p("bench_items.jsonl"), p("bench.mgse")}, [&] {
              Manifest pairs = read_manifest(p("pairs.jsonl"));
              Manifest styles = read_manifest(p("balanced_styles.jsonl"));
              Manifest contents = read_manifest(p("balanced_contents.jsonl"));

              std::vector<StyleCombination> combos = std::move(pairs.combinations);

              // Keep finished rows from a previous run, but only if they
              // were generated under these exact generation settings.
              const StageRecord* prev = previous_.find("generate");
              if (prev && fs::exists(p("generated.jsonl"))) {
                  auto it = prev->input_hashes.find("config");
                  if (it != prev->input_hashes.end() &&
                      it->second == hash_of_string(fp.dump()))
                      combos = merge_combinations(read_manifest(p("generated.jsonl")).combinations,
                                                  combos);
              }

              auto generator = make_generator();
              GenerateOptions go;
              go.out_dir = ws_ / "images";
              go.steps = cfg_.generation.steps;
              go.cfg_scale = cfg_.generation.cfg_scale;
              go.width = cfg_.generation.width;
              go.height = cfg_.generation.height;
              go.max_in_flight = cfg_.clients.max_in_flight;
              go.resume = true;
              GenerateSummary sum =
                  run_generation(*generator, combos, styles.prompts, contents.prompts, go);
              if (sum.failed > 0)
                  log_warn("generate: " + std::to_string(sum.failed) + " of " +
                           std::to_string(combos.size()) + " generations failed");

              Manifest out;
              out.stage = Stage::Generated;
              out.combinations = std::move(combos);
              out.finalize();
              write_manifest(p("generated.jsonl"), out);

              // Benchmark table: one retrieval item per generated image,
              // labeled by the style that produced it.
              std::vector<RetrievalItem> items;
              std::vector<std::string> paths;
              for (const auto& c : out.combinations) {
                  if (c.status != GenStatus::Done) continue;
                  RetrievalItem it;
                  it.id = c.combination_id;
                  it.label = c.style_id;
                  it.embedding_row = static_cast<u32>(paths.size());
                  items.push_back(it);
                  paths.push_back(*c.image_ref);
              }
              if (items.empty()) throw StageError("generate: no combination produced an image");
              write_retrieval_items(p("bench_items.jsonl"), items);
              write_mgse(p("bench.mgse"), mock_image_features(paths));
          });
}

void Runner::stage_sscl() {
    ordered_json fp;
    fp["tau"] = cfg_.sscl.train.tau;
    fp["lr"] = cfg_.sscl.train.lr;
    fp["weight_decay"] = cfg_.sscl.train.weight_decay;
    fp["epochs"] = cfg_.sscl.train.epochs;
    fp["batch_size"] = cfg_.sscl.train.batch_size;
    fp["itc_weight"] = cfg_.sscl.train.itc_weight;
    fp["instance_pairing"] = cfg_.sscl.train.instance_pairing;
    fp["embed_dim"] = cfg_.sscl.embed_dim;
    fp["seed"] = cfg_.seed;

    stage("sscl-train", {p("bench_items.jsonl"), p("bench.mgse"), p("balanced_styles.jsonl")},
          fp,
          {p("style_texts.mgse"), p("train.mgse"), p("train_labels.jsonl"), p("head.mgse"),
           p("history.json")},
          [&] {
              const std::vector<RetrievalItem> items = read_retrieval_items(p("bench_items.jsonl"));
              const EmbeddingMatrix feats = read_mgse(p("bench.mgse"));
              Manifest styles = read_manifest(p("balanced_styles.jsonl"));

              std::map<u64, u32> text_row;
              std::vector<std::string> texts;
              for (const auto& r : styles.prompts) {
                  text_row.emplace(r.id, static_cast<u32>(texts.size()));
                  texts.push_back(r.text);
              }
              EmbeddingMatrix text_emb = mock_text_embeddings(texts, cfg_.sscl.embed_dim);

              std::map<u64, u64> label_count;
              for (const auto& it : items) ++label_count[it.label];

              // The contrastive term needs a same-style peer per anchor.
              std::vector<const RetrievalItem*> kept;
              for (const auto& it : items) {
                  if (!text_row.count(it.label))
                      throw IntegrityError("sscl-train: style " + std::to_string(it.label) +
                                           " is missing from the balanced style pool");
                  if (it.embedding_row >= feats.rows)
                      throw IntegrityError("sscl-train: embedding row " +
                                           std::to_string(it.embedding_row) + " out of range");
                  if (label_count[it.label] >= 2) kept.push_back(&it);
              }
              if (kept.size() < items.size())
                  log_warn("sscl-train: dropped " + std::to_string(items.size() - kept.size()) +
                           " samples whose style has fewer than 2 images");
              if (kept.empty())
                  throw StageError("sscl-train: no style has at least 2 generated images");

              LabeledBatch batch;
              batch.image_embeddings =
                  EmbeddingMatrix(static_cast<u32>(kept.size()), feats.dim, feats.normalized);
              batch.text_embeddings = text_emb;
              batch.labels.reserve(kept.size());
              batch.pair_index.reserve(kept.size());
              for (std::size_t i = 0; i < kept.size(); ++i) {
                  const float* from = feats.row(kept[i]->embedding_row);
                  std::copy(from, from + feats.dim, batch.image_embeddings.row(i));
                  batch.labels.push_back(kept[i]->label);
                  batch.pair_index.push_back(text_row.at(kept[i]->label));
              }

              SsclConfig tc = cfg_.sscl.train;
              tc.seed = cfg_.seed;
              TrainResult res = train_head(batch, cfg_.sscl.embed_dim, tc);
              if (res.diverged_step)
                  log_warn("sscl-train: loss went non-finite at step " +
                           std::to_string(*res.diverged_step) + "; training stopped early");

              write_mgse(p("style_texts.mgse"), text_emb);
              write_mgse(p("train.mgse"), batch.image_embeddings);
              std::vector<SsclLabelRow> rows;
              rows.reserve(kept.size());
              for (std::size_t i = 0; i < kept.size(); ++i)
                  rows.push_back({static_cast<u32>(i), batch.labels[i], batch.pair_index[i]});
              write_sscl_labels(p("train_labels.jsonl"), rows);
              write_mgse(p("head.mgse"), head_to_matrix(res.head));
              write_train_history(p("history.json"), res);
          });
}

void Runner::stage_retrieval() {
    ordered_json fp;
    fp["queries_per_style"] = cfg_.retrieval.queries_per_style;
    fp["ks"] = cfg_.retrieval.ks;
    fp["seed"] = cfg_.seed;

    stage("retrieval-eval", {p("bench_items.jsonl"), p("bench.mgse")}, fp,
          {p("split.jsonl"), p("metrics.json")}, [&] {
              const std::vector<RetrievalItem> items = read_retrieval_items(p("bench_items.jsonl"));
              const EmbeddingMatrix feats = read_mgse(p("bench.mgse"));
              const u32 qps = cfg_.retrieval.queries_per_style;

              std::map<u64, u64> label_count;
              for (const auto& it : items) ++label_count[it.label];

              std::vector<RetrievalItem> kept;
              std::set<u64> dropped;
              for (const auto& it : items) {
                  if (label_count[it.label] > qps)
                      kept.push_back(it);
                  else
                      dropped.insert(it.label);
              }
              if (!dropped.empty())
                  log_warn("retrieval-eval: " + std::to_string(dropped.size()) +
                           " styles have too few items for " + std::to_string(qps) +
                           " queries; excluded");
              if (kept.empty())
                  throw StageError("retrieval-eval: no style has more than " +
                                   std::to_string(qps) + " items");

              RetrievalSplit split = build_split(kept, qps, cfg_.seed);
              write_retrieval_split(p("split.jsonl"), split);
              MetricReport report = evaluate(split, feats, cfg_.retrieval.ks);
              write_metric_report(p("metrics.json"), report);
          });
}

RunLedger Runner::run() {
    std::error_code ec;
    fs::create_directories(ws_, ec);
    if (ec)
        throw ConfigError("cannot create workspace " + ws_.string() + ": " + ec.message());

    if (fs::exists(p("ledger.json"))) previous_ = read_run_ledger(p("ledger.json"));

    if (!fs::exists(p("pool.jsonl"))) {
        if (!cfg_.clients.mock)
            throw ConfigError("no image pool at " + p("pool.jsonl").string() +
                              "; supply one or set clients.mock = true");
        write_pool(p("pool.jsonl"),
                   make_mock_pool(cfg_.mock_pool.style_classes, cfg_.mock_pool.images_per_class,
                                  cfg_.mock_pool.content_images));
    }

    stage_caption();
    stage_dedup();
    stage_balance();
    stage_pair();
    stage_generate();
    if (cfg_.sscl.enabled) stage_sscl();
    stage_retrieval();

    return combined();
}

} // namespace

ManifestDedup dedup_manifest(const Manifest& m, const EmbeddingMatrix& embeddings,
                             const DedupConfig& cfg) {
    if (m.holds_combinations())
        throw Error("dedup: manifest holds combinations, not prompts");

    std::map<u64, u32> row_of;
    for (std::size_t i = 0; i < m.prompts.size(); ++i) {
        const PromptRecord& r = m.prompts[i];
        row_of[r.id] = r.embedding_row ? *r.embedding_row : static_cast<u32>(i);
    }

    DedupPipelineResult res = run_dedup(m.prompts, embeddings, cfg);

    ManifestDedup out;
    out.embeddings = EmbeddingMatrix(static_cast<u32>(res.survivors.size()), embeddings.dim,
                                     embeddings.normalized);
    for (std::size_t i = 0; i < res.survivors.size(); ++i) {
        const u32 src = row_of.at(res.survivors[i].id);
        if (src >= embeddings.rows)
            throw IntegrityError("dedup: embedding row " + std::to_string(src) +
                                 " out of range");
        const float* from = embeddings.row(src);
        std::copy(from, from + embeddings.dim, out.embeddings.row(i));
        res.survivors[i].embedding_row = static_cast<u32>(i);
    }
    out.manifest.stage = Stage::Deduped;
    out.manifest.prompts = std::move(res.survivors);
    out.manifest.finalize();
    out.groups = std::move(res.groups);
    out.exact_survivors = res.exact_survivors;
    out.fuzzy_survivors = res.fuzzy_survivors;
    out.semantic_survivors = res.semantic_survivors;
    return out;
}

ManifestBalance balance_manifest(const Manifest& m, const EmbeddingMatrix& embeddings,
                                 const KMeansConfig& kmeans, u64 budget, u64 seed) {
    if (m.holds_combinations())
        throw Error("balance: manifest holds combinations, not prompts");
    if (m.prompts.size() != embeddings.rows)
        throw IntegrityError("balance: " + std::to_string(m.prompts.size()) +
                             " records but " + std::to_string(embeddings.rows) +
                             " embedding rows");

    std::vector<const PromptRecord*> by_row(embeddings.rows, nullptr);
    for (const auto& r : m.prompts) {
        if (!r.embedding_row || *r.embedding_row >= embeddings.rows || by_row[*r.embedding_row])
            throw IntegrityError("balance: embedding rows must map 1:1 onto records");
        by_row[*r.embedding_row] = &r;
    }

    KMeansConfig km = kmeans;
    km.seed = seed;
    ClusterTree tree = build_cluster_tree(embeddings, km);

    ManifestBalance out;
    out.effective_budget = budget;
    if (out.effective_budget > tree.total_items) {
        log_warn("balance: budget " + std::to_string(budget) + " exceeds the " +
                 std::to_string(tree.total_items) + " available records; keeping all");
        out.effective_budget = tree.total_items;
    }
    out.sample = hierarchical_sample(tree, out.effective_budget, seed);

    out.manifest.stage = Stage::Balanced;
    out.manifest.prompts.reserve(out.sample.selected.size());
    for (u64 idx : out.sample.selected) {
        PromptRecord r = *by_row[idx];
        r.embedding_row.reset();
        out.manifest.prompts.push_back(std::move(r));
    }
    out.manifest.finalize();
    out.report = balance_report(tree, out.sample.selected);
    return out;
}

RunLedger run_pipeline(const PipelineConfig& cfg) {
    const auto problems = validate_pipeline_config(cfg);
    if (!problems.empty()) {
        std::string msg = "invalid pipeline configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    Runner runner(cfg);
    return runner.run();
}

} // namespace megacurate
