#include "megacurate/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "megacurate/hash.hpp"
#include "../clients/clients_internal.hpp"

namespace megacurate {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

std::ofstream open_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    return out;
}

std::ifstream open_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    return in;
}

ordered_json parse_or_throw(const std::string& text, const std::filesystem::path& path,
                            std::size_t line_no) {
    try {
        return ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw Error(path.string() + ": malformed record at line " + std::to_string(line_no) +
                    ": " + e.what());
    }
}

// Reads a JSONL header line, checks schema/kind, and returns it.
ordered_json read_header(std::ifstream& in, const std::filesystem::path& path,
                         std::string_view kind) {
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": missing header");
    ordered_json header = parse_or_throw(line, path, 1);
    try {
        if (header.at("schema_version").get<int>() != kSchemaVersion)
            throw Error(path.string() + ": unsupported schema version");
        if (header.at("kind").get<std::string>() != kind)
            throw Error(path.string() + ": expected kind \"" + std::string(kind) + "\", got \"" +
                        header.at("kind").get<std::string>() + "\"");
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(path.string() + ": bad header: " + e.what());
    }
    return header;
}

void check_count(const std::filesystem::path& path, std::size_t expected, std::size_t got) {
    if (expected != got)
        throw IntegrityError(path.string() + ": header count " + std::to_string(expected) +
                             " does not match " + std::to_string(got) + " records");
}

DedupStage parse_dedup_stage(std::string_view name) {
    if (name == "exact") return DedupStage::Exact;
    if (name == "fuzzy") return DedupStage::Fuzzy;
    if (name == "semantic") return DedupStage::Semantic;
    throw Error("unknown dedup stage: " + std::string(name));
}

ordered_json stage_record_to_json(const StageRecord& r) {
    ordered_json j;
    j["name"] = r.name;
    j["status"] = run_status_name(r.status);
    j["skipped"] = r.skipped;
    j["inputs"] = ordered_json(r.input_hashes);
    j["outputs"] = ordered_json(r.output_hashes);
    j["wall_seconds"] = r.wall_seconds;
    j["warnings"] = r.warnings;
    if (r.status == RunStatus::Failed) j["error"] = r.error;
    return j;
}

StageRecord stage_record_from_json(const ordered_json& j) {
    StageRecord r;
    r.name = j.at("name").get<std::string>();
    r.status = parse_run_status(j.at("status").get<std::string>());
    r.skipped = j.at("skipped").get<bool>();
    r.input_hashes = j.at("inputs").get<std::map<std::string, std::string>>();
    r.output_hashes = j.at("outputs").get<std::map<std::string, std::string>>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    return r;
}

} // namespace

std::string_view run_status_name(RunStatus s) {
    switch (s) {
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
    }
    throw Error("invalid run status");
}

RunStatus parse_run_status(std::string_view name) {
    if (name == "done") return RunStatus::Done;
    if (name == "failed") return RunStatus::Failed;
    throw Error("unknown run status: " + std::string(name));
}

const StageRecord* RunLedger::find(std::string_view name) const {
    for (const auto& rec : stages)
        if (rec.name == name) return &rec;
    return nullptr;
}

void write_run_ledger(const std::filesystem::path& path, const RunLedger& ledger) {
    auto out = open_write(path);
    ordered_json j;
    j["schema_version"] = ledger.schema_version;
    j["stages"] = ordered_json::array();
    for (const auto& rec : ledger.stages) j["stages"].push_back(stage_record_to_json(rec));
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

RunLedger read_run_ledger(const std::filesystem::path& path) {
    auto in = open_read(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw IntegrityError(path.string() + ": malformed ledger: " + e.what());
    }
    RunLedger ledger;
    try {
        ledger.schema_version = j.at("schema_version").get<int>();
        for (const auto& s : j.at("stages")) ledger.stages.push_back(stage_record_from_json(s));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw IntegrityError(path.string() + ": malformed ledger: " + e.what());
    }
    if (ledger.schema_version != kSchemaVersion)
        throw Error(path.string() + ": unsupported schema version " +
                    std::to_string(ledger.schema_version));
    return ledger;
}

std::string file_hash_hex(const std::filesystem::path& path) {
    auto in = open_read(path);
    char buf[65536];
    u64 h = 0xcbf29ce484222325ull;
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return detail::hex16(h);
}

void write_caption_failures(const std::filesystem::path& path,
                            const std::vector<CaptionFailure>& failures) {
    auto out = open_write(path);
    ordered_json header;
    header["schema_version"] = kSchemaVersion;
    header["kind"] = "caption_failures";
    header["count"] = failures.size();
    out << header.dump() << '\n';
    for (const auto& f : failures) {
        ordered_json j;
        j["image_ref"] = f.image_ref;
        j["mode"] = caption_mode_name(f.mode);
        j["error"] = f.error;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<CaptionFailure> read_caption_failures(const std::filesystem::path& path) {
    auto in = open_read(path);
    ordered_json header = read_header(in, path, "caption_failures");
    std::vector<CaptionFailure> failures;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = parse_or_throw(line, path, line_no);
        try {
            CaptionFailure f;
            f.image_ref = j.at("image_ref").get<std::string>();
            f.mode = parse_caption_mode(j.at("mode").get<std::string>());
            f.error = j.at("error").get<std::string>();
            failures.push_back(std::move(f));
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " + std::to_string(line_no) +
                        ": " + e.what());
        }
    }
    check_count(path, header.at("count").get<std::size_t>(), failures.size());
    return failures;
}

void write_dedup_groups(const std::filesystem::path& path,
                        const std::vector<DuplicateGroup>& groups) {
    auto out = open_write(path);
    ordered_json header;
    header["schema_version"] = kSchemaVersion;
    header["kind"] = "dedup_groups";
    header["count"] = groups.size();
    out << header.dump() << '\n';
    for (const auto& g : groups) {
        ordered_json j;
        j["representative_id"] = g.representative_id;
        j["stage"] = dedup_stage_name(g.stage);
        j["member_ids"] = g.member_ids;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<DuplicateGroup> read_dedup_groups(const std::filesystem::path& path) {
    auto in = open_read(path);
    ordered_json header = read_header(in, path, "dedup_groups");
    std::vector<DuplicateGroup> groups;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = parse_or_throw(line, path, line_no);
        try {
            DuplicateGroup g;
            g.representative_id = j.at("representative_id").get<u64>();
            g.stage = parse_dedup_stage(j.at("stage").get<std::string>());
            g.member_ids = j.at("member_ids").get<std::vector<u64>>();
            groups.push_back(std::move(g));
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " + std::to_string(line_no) +
                        ": " + e.what());
        }
    }
    check_count(path, header.at("count").get<std::size_t>(), groups.size());
    return groups;
}

void write_sscl_labels(const std::filesystem::path& path, const std::vector<SsclLabelRow>& rows) {
    auto out = open_write(path);
    ordered_json header;
    header["schema_version"] = kSchemaVersion;
    header["kind"] = "sscl_labels";
    header["count"] = rows.size();
    out << header.dump() << '\n';
    for (const auto& r : rows) {
        ordered_json j;
        j["row"] = r.row;
        j["label"] = r.label;
        j["text_row"] = r.text_row;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<SsclLabelRow> read_sscl_labels(const std::filesystem::path& path) {
    auto in = open_read(path);
    ordered_json header = read_header(in, path, "sscl_labels");
    std::vector<SsclLabelRow> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = parse_or_throw(line, path, line_no);
        try {
            SsclLabelRow r;
            r.row = j.at("row").get<u32>();
            r.label = j.at("label").get<u64>();
            r.text_row = j.at("text_row").get<u32>();
            rows.push_back(r);
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " + std::to_string(line_no) +
                        ": " + e.what());
        }
    }
    check_count(path, header.at("count").get<std::size_t>(), rows.size());

    // Every embedding row labeled exactly once: the rows must be a
    // permutation of 0..count-1.
    std::vector<char> seen(rows.size(), 0);
    for (const auto& r : rows) {
        if (r.row >= rows.size() || seen[r.row])
            throw IntegrityError(path.string() + ": label rows must cover 0.." +
                                 std::to_string(rows.size() ? rows.size() - 1 : 0) +
                                 " exactly once (row " + std::to_string(r.row) + ")");
        seen[r.row] = 1;
    }
    return rows;
}

void write_balance_report_json(const std::filesystem::path& path, u64 budget,
                               const SampleResult& sample,
                               const std::vector<BalanceReportRow>& rows) {
    auto out = open_write(path);
    ordered_json j;
    j["budget"] = budget;
    j["selected"] = sample.selected.size();
    j["residual"] = sample.residual;
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json rj;
        rj["cluster"] = r.cluster;
        rj["raw"] = r.raw;
        rj["selected"] = r.selected;
        rj["raw_share"] = r.raw_share;
        rj["selected_share"] = r.selected_share;
        j["rows"].push_back(std::move(rj));
    }
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_train_history(const std::filesystem::path& path, const TrainResult& result) {
    auto out = open_write(path);
    ordered_json j;
    j["epoch_mean_loss"] = result.epoch_mean_loss;
    j["excluded_anchors"] = result.excluded_anchors;
    if (result.diverged_step)
        j["diverged_step"] = *result.diverged_step;
    else
        j["diverged_step"] = nullptr;
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace megacurate
