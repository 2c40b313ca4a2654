#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "megacurate/clients.hpp"
#include "megacurate/config.hpp"
#include "megacurate/sscl.hpp"

namespace megacurate {

enum class RunStatus { Done, Failed };

std::string_view run_status_name(RunStatus s);
RunStatus parse_run_status(std::string_view name);

// One pipeline stage's ledger entry. Hashes are 16-hex-digit FNV-1a over
// file bytes; the pseudo-input "config" fingerprints the stage-relevant
// configuration so a knob change invalidates exactly the stages it feeds.
struct StageRecord {
    std::string name;
    RunStatus status = RunStatus::Done;
    bool skipped = false; // reflects the most recent run
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> output_hashes;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
    std::string error; // set when Failed

    bool operator==(const StageRecord&) const = default;
};

struct RunLedger {
    int schema_version = 1;
    std::vector<StageRecord> stages; // pipeline order

    const StageRecord* find(std::string_view name) const;
};

void write_run_ledger(const std::filesystem::path& path, const RunLedger& ledger);
RunLedger read_run_ledger(const std::filesystem::path& path);

// FNV-1a 64 over the file's bytes, as 16 lowercase hex digits.
std::string file_hash_hex(const std::filesystem::path& path);

// Executes caption -> dedup -> balance -> pair -> generate ->
// [sscl-train] -> retrieval-eval inside cfg.workspace, persisting the
// ledger after every stage. A stage whose inputs hash to its previous
// ledger entry is verified (outputs must still match their recorded
// hashes — a mismatch is an IntegrityError naming the stage) and skipped.
// Stage failures leave the ledger on disk and rethrow.
RunLedger run_pipeline(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Manifest-level stage wrappers shared by the pipeline and the standalone
// subcommands.

struct ManifestDedup {
    Manifest manifest;          // stage Deduped, embedding rows re-pointed
    EmbeddingMatrix embeddings; // surviving rows, compacted
    std::vector<DuplicateGroup> groups;
    std::size_t exact_survivors = 0;
    std::size_t fuzzy_survivors = 0;
    std::size_t semantic_survivors = 0;
};

// Runs the three dedup passes over a prompt manifest and its embedding
// sidecar, compacting the surviving rows into a fresh matrix.
ManifestDedup dedup_manifest(const Manifest& m, const EmbeddingMatrix& embeddings,
                             const DedupConfig& cfg);

struct ManifestBalance {
    Manifest manifest; // stage Balanced, embedding rows cleared
    SampleResult sample;
    std::vector<BalanceReportRow> report;
    u64 effective_budget = 0; // requested budget, clamped to the pool size
};

// Clusters a prompt manifest's embeddings into a hierarchy and draws the
// balanced selection. `seed` drives both the clustering and the draw; a
// budget beyond the pool size keeps everything (with a warning).
ManifestBalance balance_manifest(const Manifest& m, const EmbeddingMatrix& embeddings,
                                 const KMeansConfig& kmeans, u64 budget, u64 seed);

// ---------------------------------------------------------------------------
// File formats shared by the pipeline and the standalone subcommands.

// Caption failures sidecar: JSONL, header {schema_version, kind, count}
// then {image_ref, mode, error} per failed image.
void write_caption_failures(const std::filesystem::path& path,
                            const std::vector<CaptionFailure>& failures);
std::vector<CaptionFailure> read_caption_failures(const std::filesystem::path& path);

// Duplicate groups: JSONL, header {schema_version, kind, count} then
// {representative_id, stage, member_ids} per group.
void write_dedup_groups(const std::filesystem::path& path,
                        const std::vector<DuplicateGroup>& groups);
std::vector<DuplicateGroup> read_dedup_groups(const std::filesystem::path& path);

// Training labels: JSONL, header {schema_version, kind, count} then one
// {row, label, text_row} per embedding row. Rows must cover 0..count-1
// exactly once; readers reject anything else.
struct SsclLabelRow {
    u32 row = 0;
    u64 label = 0;
    u32 text_row = 0;

    bool operator==(const SsclLabelRow&) const = default;
};
void write_sscl_labels(const std::filesystem::path& path,
                       const std::vector<SsclLabelRow>& rows);
std::vector<SsclLabelRow> read_sscl_labels(const std::filesystem::path& path);

// Balance accounting: one JSON object with budget/selected/residual plus
// per-cluster rows.
void write_balance_report_json(const std::filesystem::path& path, u64 budget,
                               const SampleResult& sample,
                               const std::vector<BalanceReportRow>& rows);

// Training history: one JSON object with epoch_mean_loss /
// excluded_anchors / diverged_step.
void write_train_history(const std::filesystem::path& path, const TrainResult& result);

} // namespace megacurate
