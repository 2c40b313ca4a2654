// Command-line front end: the full pipeline under `run`, plus one
// subcommand per stage so any step can be driven or replayed by hand.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "megacurate/clients.hpp"
#include "megacurate/log.hpp"
#include "megacurate/manifest_io.hpp"
#include "megacurate/pipeline.hpp"
#include "megacurate/retrieval.hpp"

namespace fs = std::filesystem;
using namespace megacurate;

namespace {

std::unique_ptr<Captioner> pick_captioner(bool mock) {
    if (mock) return std::make_unique<MockCaptioner>();
    auto ep = caption_endpoint_from_env();
    if (!ep)
        throw ConfigError("MEGACURATE_CAPTION_URL is not set; pass --mock for the "
                          "offline captioner");
    return std::make_unique<HttpCaptioner>(*ep);
}

std::unique_ptr<Generator> pick_generator(bool mock) {
    if (mock) return std::make_unique<MockGenerator>();
    auto ep = generation_endpoint_from_env();
    if (!ep)
        throw ConfigError("MEGACURATE_GEN_URL is not set; pass --mock for the "
                          "offline generator");
    return std::make_unique<HttpGenerator>(*ep);
}

void add_run(CLI::App& app) {
    auto* sub = app.add_subcommand("run", "Execute the full curation pipeline");
    struct RunOpts {
        std::string config;
        std::string workspace;
        bool mock = false;
        bool demo = false;
    };
    auto opts = std::make_shared<RunOpts>();
    sub->add_option("--config", opts->config, "pipeline TOML config");
    sub->add_option("--workspace", opts->workspace, "override the configured workspace");
    sub->add_flag("--mock", opts->mock, "force offline mock clients");
    sub->add_flag("--demo-scale", opts->demo, "shrink every stage to the synthetic demo size");
    sub->callback([opts] {
        PipelineConfig cfg;
        if (!opts->config.empty()) cfg = load_pipeline_config(opts->config);
        if (opts->demo) apply_demo_scale(cfg);
        if (opts->mock) cfg.clients.mock = true;
        if (!opts->workspace.empty()) cfg.workspace = opts->workspace;
        run_pipeline(cfg);
        std::cout << "pipeline complete: " << (cfg.workspace / "metrics.json").string() << "\n";
    });
}

void add_validate_config(CLI::App& app) {
    auto* sub = app.add_subcommand("validate-config", "Check a config file, listing every problem");
    auto path = std::make_shared<std::string>();
    sub->add_option("--config", *path, "pipeline TOML config")->required();
    sub->callback([path] {
        const auto problems = validate_config_file(*path);
        for (const auto& p : problems) std::cerr << p << "\n";
        if (!problems.empty())
            throw ConfigError(std::to_string(problems.size()) + " problem(s) in " + *path);
        std::cout << "ok\n";
    });
}

void add_mock_pool(CLI::App& app) {
    auto* sub = app.add_subcommand("mock-pool", "Write a synthetic image pool manifest");
    struct MockPoolOpts {
        u32 styles = 20;
        u32 per_class = 10;
        u32 contents = 40;
        std::string out = "pool.jsonl";
    };
    auto opts = std::make_shared<MockPoolOpts>();
    sub->add_option("--styles", opts->styles, "style classes");
    sub->add_option("--images-per-class", opts->per_class, "images per style class");
    sub->add_option("--contents", opts->contents, "content images");
    sub->add_option("--out", opts->out, "pool manifest path");
    sub->callback([opts] {
        const auto pool = make_mock_pool(opts->styles, opts->per_class, opts->contents);
        write_pool(opts->out, pool);
        std::cout << "wrote " << pool.size() << " pool images to " << opts->out << "\n";
    });
}

void add_caption(CLI::App& app) {
    auto* sub = app.add_subcommand("caption", "Caption an image pool into a prompt manifest");
    struct CaptionOpts {
        std::string images;
        std::string mode = "style";
        std::string out;
        std::string emb;
        std::string failures;
        bool mock = false;
        unsigned in_flight = 8;
    };
    auto opts = std::make_shared<CaptionOpts>();
    sub->add_option("--images", opts->images, "image pool manifest")->required();
    sub->add_option("--mode", opts->mode, "prompt kind to produce")
        ->check(CLI::IsMember({"style", "content"}));
    sub->add_option("--out", opts->out, "prompt manifest path")->required();
    sub->add_option("--emb", opts->emb, "embedding sidecar path (default: <out>.mgse)");
    sub->add_option("--failures", opts->failures,
                    "failure sidecar path (default: <out>_failures.jsonl)");
    sub->add_flag("--mock", opts->mock, "use the offline captioner");
    sub->add_option("--max-in-flight", opts->in_flight, "parallel caption requests");
    sub->callback([opts] {
        const fs::path out = opts->out;
        const fs::path emb_path =
            opts->emb.empty() ? fs::path(out).replace_extension(".mgse") : fs::path(opts->emb);
        const fs::path fail_path =
            opts->failures.empty()
                ? out.parent_path() / (out.stem().string() + "_failures.jsonl")
                : fs::path(opts->failures);

        const auto pool = read_pool(opts->images);
        auto captioner = pick_captioner(opts->mock);
        CaptionOptions copt;
        copt.max_in_flight = opts->in_flight;
        CaptionRunResult res =
            run_captioning(*captioner, pool, parse_caption_mode(opts->mode), copt);

        std::vector<std::string> texts;
        texts.reserve(res.prompts.size());
        for (std::size_t i = 0; i < res.prompts.size(); ++i) {
            res.prompts[i].embedding_row = static_cast<u32>(i);
            texts.push_back(res.prompts[i].text);
        }
        Manifest m;
        m.stage = Stage::Raw;
        m.prompts = std::move(res.prompts);
        m.finalize();
        write_manifest(out, m);
        write_mgse(emb_path, mock_text_embeddings(texts));
        write_caption_failures(fail_path, res.failures);
        std::cout << "captioned " << m.prompts.size() << " images (" << res.failures.size()
                  << " failed) -> " << out.string() << "\n";
    });
}

void add_dedup(CLI::App& app) {
    auto* sub = app.add_subcommand("dedup", "Three-pass prompt dedup over a manifest");
    struct DedupOpts {
        std::string in, emb, out, groups, out_emb;
        DedupConfig cfg;
    };
    auto opts = std::make_shared<DedupOpts>();
    sub->add_option("--in", opts->in, "input prompt manifest")->required();
    sub->add_option("--emb", opts->emb, "input embedding sidecar")->required();
    sub->add_option("--out", opts->out, "surviving-prompt manifest")->required();
    sub->add_option("--groups", opts->groups, "duplicate-group report")->required();
    sub->add_option("--out-emb", opts->out_emb,
                    "compacted embedding sidecar (default: <out>.mgse)");
    sub->add_option("--jaccard", opts->cfg.jaccard_threshold, "fuzzy merge threshold");
    sub->add_option("--semantic", opts->cfg.semantic_threshold, "cosine merge threshold");
    sub->add_option("--shingle-size", opts->cfg.shingle_size, "tokens per shingle");
    sub->add_option("--num-hashes", opts->cfg.num_hashes, "MinHash permutations");
    sub->add_option("--lsh-bands", opts->cfg.lsh_bands, "LSH bands");
    sub->add_option("--seed", opts->cfg.seed, "MinHash permutation seed");
    sub->callback([opts] {
        const Manifest m = read_manifest(opts->in);
        const EmbeddingMatrix emb = read_mgse(opts->emb);
        ManifestDedup res = dedup_manifest(m, emb, opts->cfg);
        const fs::path out_emb = opts->out_emb.empty()
                                     ? fs::path(opts->out).replace_extension(".mgse")
                                     : fs::path(opts->out_emb);
        write_manifest(opts->out, res.manifest);
        write_mgse(out_emb, res.embeddings);
        write_dedup_groups(opts->groups, res.groups);
        std::cout << m.prompts.size() << " -> exact " << res.exact_survivors << " -> fuzzy "
                  << res.fuzzy_survivors << " -> semantic " << res.semantic_survivors << " ("
                  << res.groups.size() << " duplicate groups)\n";
    });
}

void add_balance(CLI::App& app) {
    auto* sub = app.add_subcommand("balance", "Hierarchical balanced sampling over a manifest");
    struct BalanceOpts {
        std::string in, emb, out, report;
        KMeansConfig kmeans;
        u64 budget = 170000;
        u64 seed = 7;
    };
    auto opts = std::make_shared<BalanceOpts>();
    sub->add_option("--in", opts->in, "input prompt manifest")->required();
    sub->add_option("--emb", opts->emb, "input embedding sidecar")->required();
    sub->add_option("--levels", opts->kmeans.levels, "cluster counts, lowest level first")
        ->delimiter(',');
    sub->add_option("--budget", opts->budget, "target selection size");
    sub->add_option("--seed", opts->seed, "clustering and sampling seed");
    sub->add_option("--max-iters", opts->kmeans.max_iters, "Lloyd iteration cap");
    sub->add_option("--tol", opts->kmeans.tol, "relative inertia convergence tolerance");
    sub->add_option("--out", opts->out, "balanced manifest")->required();
    sub->add_option("--report", opts->report, "per-cluster accounting JSON")->required();
    sub->callback([opts] {
        const Manifest m = read_manifest(opts->in);
        const EmbeddingMatrix emb = read_mgse(opts->emb);
        ManifestBalance res = balance_manifest(m, emb, opts->kmeans, opts->budget, opts->seed);
        write_manifest(opts->out, res.manifest);
        write_balance_report_json(opts->report, res.effective_budget, res.sample, res.report);
        std::cout << "selected " << res.sample.selected.size() << " of " << m.prompts.size()
                  << " (budget " << res.effective_budget << ", residual " << res.sample.residual
                  << ")\n";
    });
}

void add_pair(CLI::App& app) {
    auto* sub = app.add_subcommand("pair", "Pair each style with sampled content prompts");
    struct PairOpts {
        std::string styles, contents, out;
        PairingConfig cfg;
    };
    auto opts = std::make_shared<PairOpts>();
    sub->add_option("--styles", opts->styles, "balanced style manifest")->required();
    sub->add_option("--contents", opts->contents, "content manifest")->required();
    sub->add_option("-n,--contents-per-style", opts->cfg.n_contents_per_style,
                    "content draws per style");
    sub->add_option("--seed", opts->cfg.seed, "pairing seed");
    sub->add_flag("!--no-content-reuse", opts->cfg.allow_content_reuse_across_styles,
                  "forbid content reuse across styles");
    sub->add_option("--out", opts->out, "combination manifest")->required();
    sub->callback([opts] {
        const Manifest styles = read_manifest(opts->styles);
        const Manifest contents = read_manifest(opts->contents);
        Manifest out;
        out.stage = Stage::Paired;
        out.combinations = make_combinations(styles.prompts, contents.prompts, opts->cfg);
        out.finalize();
        write_manifest(opts->out, out);
        std::cout << "paired " << styles.prompts.size() << " styles x "
                  << opts->cfg.n_contents_per_style << " -> " << out.combinations.size()
                  << " combinations\n";
    });
}

void add_generate(CLI::App& app) {
    auto* sub = app.add_subcommand("generate", "Render images for a combination manifest");
    struct GenOpts {
        std::string pairs, out, styles, contents, manifest;
        GenerationStageConfig gen;
        bool mock = false;
        bool fresh = false;
        unsigned in_flight = 8;
    };
    auto opts = std::make_shared<GenOpts>();
    sub->add_option("--pairs", opts->pairs, "combination manifest")->required();
    sub->add_option("--out", opts->out, "image output directory")->required();
    sub->add_option("--styles", opts->styles,
                    "style manifest (default: balanced_styles.jsonl beside --pairs)");
    sub->add_option("--contents", opts->contents,
                    "content manifest (default: balanced_contents.jsonl beside --pairs)");
    sub->add_option("--manifest", opts->manifest,
                    "updated manifest path (default: generated.jsonl beside --pairs)");
    sub->add_option("--steps", opts->gen.steps, "sampler steps");
    sub->add_option("--cfg-scale", opts->gen.cfg_scale, "guidance scale");
    sub->add_option("--width", opts->gen.width, "image width");
    sub->add_option("--height", opts->gen.height, "image height");
    sub->add_flag("--mock", opts->mock, "use the offline generator");
    sub->add_flag("--fresh", opts->fresh, "regenerate rows already marked done");
    sub->add_option("--max-in-flight", opts->in_flight, "parallel generation requests");
    sub->callback([opts] {
        const fs::path pairs_path = opts->pairs;
        const fs::path dir = pairs_path.parent_path();
        const fs::path styles_path =
            opts->styles.empty() ? dir / "balanced_styles.jsonl" : fs::path(opts->styles);
        const fs::path contents_path =
            opts->contents.empty() ? dir / "balanced_contents.jsonl" : fs::path(opts->contents);
        const fs::path manifest_path =
            opts->manifest.empty() ? dir / "generated.jsonl" : fs::path(opts->manifest);

        Manifest pairs = read_manifest(pairs_path);
        const Manifest styles = read_manifest(styles_path);
        const Manifest contents = read_manifest(contents_path);

        std::vector<StyleCombination> combos = std::move(pairs.combinations);
        if (!opts->fresh && fs::exists(manifest_path))
            combos = merge_combinations(read_manifest(manifest_path).combinations, combos);

        auto generator = pick_generator(opts->mock);
        GenerateOptions go;
        go.out_dir = opts->out;
        go.steps = opts->gen.steps;
        go.cfg_scale = opts->gen.cfg_scale;
        go.width = opts->gen.width;
        go.height = opts->gen.height;
        go.max_in_flight = opts->in_flight;
        go.resume = !opts->fresh;
        const GenerateSummary sum =
            run_generation(*generator, combos, styles.prompts, contents.prompts, go);

        Manifest out;
        out.stage = Stage::Generated;
        out.combinations = std::move(combos);
        out.finalize();
        write_manifest(manifest_path, out);
        std::cout << "generated " << sum.done << ", failed " << sum.failed << ", skipped "
                  << sum.skipped << " -> " << manifest_path.string() << "\n";
    });
}

void add_featurize(CLI::App& app) {
    auto* sub =
        app.add_subcommand("featurize", "Extract benchmark features from generated images");
    struct FeaturizeOpts {
        std::string manifest, items, emb;
    };
    auto opts = std::make_shared<FeaturizeOpts>();
    sub->add_option("--manifest", opts->manifest, "generated combination manifest")->required();
    sub->add_option("--items", opts->items, "benchmark item list output")->required();
    sub->add_option("--emb", opts->emb, "feature matrix output")->required();
    sub->callback([opts] {
        const Manifest m = read_manifest(opts->manifest);
        std::vector<RetrievalItem> items;
        std::vector<std::string> paths;
        for (const auto& c : m.combinations) {
            if (c.status != GenStatus::Done) continue;
            RetrievalItem it;
            it.id = c.combination_id;
            it.label = c.style_id;
            it.embedding_row = static_cast<u32>(paths.size());
            items.push_back(it);
            paths.push_back(*c.image_ref);
        }
        if (items.empty())
            throw StageError("featurize: no finished generation in " + opts->manifest);
        write_retrieval_items(opts->items, items);
        write_mgse(opts->emb, mock_image_features(paths));
        std::cout << "featurized " << items.size() << " images -> " << opts->emb << "\n";
    });
}

void add_sscl_train(CLI::App& app) {
    auto* sub = app.add_subcommand("sscl-train", "Train the projection head on labeled features");
    struct TrainOpts {
        std::string emb, labels, text, out, history;
        SsclConfig cfg;
    };
    auto opts = std::make_shared<TrainOpts>();
    sub->add_option("--emb", opts->emb, "image feature matrix")->required();
    sub->add_option("--labels", opts->labels, "per-row label file")->required();
    sub->add_option("--text", opts->text, "prompt embedding matrix")->required();
    sub->add_option("--tau", opts->cfg.tau, "contrastive temperature");
    sub->add_option("--lr", opts->cfg.lr, "learning rate");
    sub->add_option("--weight-decay", opts->cfg.weight_decay, "decoupled weight decay");
    sub->add_option("--epochs", opts->cfg.epochs, "training epochs");
    sub->add_option("--batch-size", opts->cfg.batch_size, "soft batch-size cap");
    sub->add_option("--itc-weight", opts->cfg.itc_weight, "image-text term weight");
    sub->add_flag("--instance-pairing", opts->cfg.instance_pairing,
                  "positives require the exact prompt row, not just the style");
    sub->add_option("--seed", opts->cfg.seed, "init and shuffle seed");
    sub->add_option("--out", opts->out, "trained head matrix")->required();
    sub->add_option("--history", opts->history, "training history JSON")->required();
    sub->callback([opts] {
        LabeledBatch batch;
        batch.image_embeddings = read_mgse(opts->emb);
        batch.text_embeddings = read_mgse(opts->text);
        const auto rows = read_sscl_labels(opts->labels);
        if (rows.size() != batch.image_embeddings.rows)
            throw IntegrityError(opts->labels + ": " + std::to_string(rows.size()) +
                                 " label rows for " +
                                 std::to_string(batch.image_embeddings.rows) +
                                 " embedding rows");
        batch.labels.resize(rows.size());
        batch.pair_index.resize(rows.size());
        for (const auto& r : rows) {
            if (r.text_row >= batch.text_embeddings.rows)
                throw IntegrityError(opts->labels + ": text row " + std::to_string(r.text_row) +
                                     " out of range");
            batch.labels[r.row] = r.label;
            batch.pair_index[r.row] = r.text_row;
        }

        const TrainResult res = train_head(batch, batch.text_embeddings.dim, opts->cfg);
        write_mgse(opts->out, head_to_matrix(res.head));
        write_train_history(opts->history, res);
        if (res.diverged_step)
            log_warn("sscl-train: loss went non-finite at step " +
                     std::to_string(*res.diverged_step) + "; training stopped early");
        std::cout << "trained " << res.epoch_mean_loss.size() << " epochs; mean loss "
                  << (res.epoch_mean_loss.empty() ? 0.0 : res.epoch_mean_loss.front()) << " -> "
                  << (res.epoch_mean_loss.empty() ? 0.0 : res.epoch_mean_loss.back()) << "\n";
    });
}

void add_retrieval_split(CLI::App& app) {
    auto* sub = app.add_subcommand("retrieval-split",
                                   "Draw a per-style query/gallery split from benchmark items");
    struct SplitOpts {
        std::string items, out;
        u32 queries = 4;
        u64 seed = 7;
    };
    auto opts = std::make_shared<SplitOpts>();
    sub->add_option("--items", opts->items, "benchmark item list")->required();
    sub->add_option("--queries-per-style", opts->queries, "queries drawn per style");
    sub->add_option("--seed", opts->seed, "draw seed");
    sub->add_option("--out", opts->out, "split file")->required();
    sub->callback([opts] {
        const auto items = read_retrieval_items(opts->items);
        const RetrievalSplit split = build_split(items, opts->queries, opts->seed);
        write_retrieval_split(opts->out, split);
        std::cout << "split " << items.size() << " items into " << split.queries.size()
                  << " queries / " << split.gallery.size() << " gallery\n";
    });
}

void add_retrieval_eval(CLI::App& app) {
    auto* sub = app.add_subcommand("retrieval-eval", "Score mAP@k and Recall@k over a split");
    struct EvalOpts {
        std::string split, emb, report;
        std::vector<u32> ks = {1, 10};
    };
    auto opts = std::make_shared<EvalOpts>();
    sub->add_option("--split", opts->split, "query/gallery split file")->required();
    sub->add_option("--emb", opts->emb, "feature matrix")->required();
    sub->add_option("--k", opts->ks, "cutoffs")->delimiter(',');
    sub->add_option("--report", opts->report, "metric report JSON")->required();
    sub->callback([opts] {
        const RetrievalSplit split = read_retrieval_split(opts->split);
        const EmbeddingMatrix emb = read_mgse(opts->emb);
        const MetricReport report = evaluate(split, emb, opts->ks);
        write_metric_report(opts->report, report);
        for (const auto& [k, v] : report.map_at) std::cout << "mAP@" << k << " = " << v << "\n";
        for (const auto& [k, v] : report.recall_at)
            std::cout << "recall@" << k << " = " << v << "\n";
        std::cout << report.evaluated_queries << " queries evaluated, "
                  << report.excluded_queries << " excluded\n";
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"megacurate: style-centric data curation pipeline"};
    app.require_subcommand(1);

    add_run(app);
    add_validate_config(app);
    add_mock_pool(app);
    add_caption(app);
    add_dedup(app);
    add_balance(app);
    add_pair(app);
    add_generate(app);
    add_featurize(app);
    add_sscl_train(app);
    add_retrieval_split(app);
    add_retrieval_eval(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
