#include "megacurate/manifest_io.hpp"

#include <fstream>

#include <json.hpp>

namespace megacurate {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

ordered_json prompt_to_json(const PromptRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["kind"] = kind_name(r.kind);
    j["text"] = r.text;
    j["source_tag"] = r.source_tag;
    if (r.embedding_row) j["embedding_row"] = *r.embedding_row;
    return j;
}

ordered_json combination_to_json(const StyleCombination& c) {
    ordered_json j;
    j["combination_id"] = c.combination_id;
    j["style_id"] = c.style_id;
    j["content_id"] = c.content_id;
    j["generation_seed"] = c.generation_seed;
    j["status"] = status_name(c.status);
    if (c.image_ref) j["image_ref"] = *c.image_ref;
    if (c.steps) j["steps"] = *c.steps;
    if (c.cfg_scale) j["cfg_scale"] = *c.cfg_scale;
    if (c.error) j["error"] = *c.error;
    return j;
}

PromptRecord prompt_from_json(const ordered_json& j) {
    PromptRecord r;
    r.id = j.at("id").get<u64>();
    r.kind = parse_kind(j.at("kind").get<std::string>());
    r.text = j.at("text").get<std::string>();
    r.source_tag = j.at("source_tag").get<std::string>();
    if (j.contains("embedding_row")) r.embedding_row = j.at("embedding_row").get<u32>();
    if (r.text.empty()) throw Error("empty text");
    return r;
}

StyleCombination combination_from_json(const ordered_json& j) {
    StyleCombination c;
    c.combination_id = j.at("combination_id").get<u64>();
    c.style_id = j.at("style_id").get<u64>();
    c.content_id = j.at("content_id").get<u64>();
    c.generation_seed = j.at("generation_seed").get<u32>();
    c.status = parse_status(j.at("status").get<std::string>());
    if (j.contains("image_ref")) c.image_ref = j.at("image_ref").get<std::string>();
    if (j.contains("steps")) c.steps = j.at("steps").get<u32>();
    if (j.contains("cfg_scale")) c.cfg_scale = j.at("cfg_scale").get<double>();
    if (j.contains("error")) c.error = j.at("error").get<std::string>();
    return c;
}

} // namespace

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    ordered_json header;
    header["schema_version"] = m.schema_version;
    header["stage"] = stage_name(m.stage);
    header["count"] = m.count();
    out << header.dump() << '\n';
    if (m.holds_combinations()) {
        for (const auto& c : m.combinations) out << combination_to_json(c).dump() << '\n';
    } else {
        for (const auto& r : m.prompts) out << prompt_to_json(r).dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string line;
    std::size_t line_no = 0;

    auto parse_line = [&](const std::string& text) -> ordered_json {
        try {
            return ordered_json::parse(text);
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " +
                        std::to_string(line_no) + ": " + e.what());
        }
    };

    if (!std::getline(in, line))
        throw Error(path.string() + ": missing manifest header");
    ++line_no;
    ordered_json header = parse_line(line);
    Manifest m;
    try {
        m.schema_version = header.at("schema_version").get<int>();
        m.stage = parse_stage(header.at("stage").get<std::string>());
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(path.string() + ": bad manifest header: " + e.what());
    }
    if (m.schema_version != kSchemaVersion)
        throw Error(path.string() + ": unsupported schema version " +
                    std::to_string(m.schema_version));
    std::size_t expected = header.at("count").get<std::size_t>();

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = parse_line(line);
        try {
            if (m.holds_combinations())
                m.combinations.push_back(combination_from_json(j));
            else
                m.prompts.push_back(prompt_from_json(j));
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " +
                        std::to_string(line_no) + ": " + e.what());
        }
    }
    if (m.count() != expected)
        throw IntegrityError(path.string() + ": header count " + std::to_string(expected) +
                             " does not match " + std::to_string(m.count()) + " records");

    // The format contract keeps records sorted by id; enforce it so a
    // hand-assembled file cannot smuggle duplicates past downstream stages.
    if (m.holds_combinations()) {
        for (std::size_t i = 1; i < m.combinations.size(); ++i) {
            if (m.combinations[i].combination_id <= m.combinations[i - 1].combination_id)
                throw IntegrityError(path.string() + ": records not sorted by unique id at line " +
                                     std::to_string(i + 2));
        }
    } else {
        for (std::size_t i = 1; i < m.prompts.size(); ++i) {
            if (m.prompts[i].id <= m.prompts[i - 1].id)
                throw IntegrityError(path.string() + ": records not sorted by unique id at line " +
                                     std::to_string(i + 2));
        }
    }
    return m;
}

} // namespace megacurate
