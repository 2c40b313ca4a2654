#include <fstream>

#include <json.hpp>

#include "megacurate/retrieval.hpp"

namespace megacurate {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

ordered_json item_to_json(const RetrievalItem& it) {
    ordered_json j;
    j["id"] = it.id;
    j["label"] = it.label;
    j["row"] = it.embedding_row;
    return j;
}

RetrievalItem item_from_json(const ordered_json& j) {
    RetrievalItem it;
    it.id = j.at("id").get<u64>();
    it.label = j.at("label").get<u64>();
    it.embedding_row = j.at("row").get<u32>();
    return it;
}

ordered_json parse_or_throw(const std::filesystem::path& path, const std::string& text,
                            std::size_t line_no) {
    try {
        return ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw Error(path.string() + ": malformed record at line " +
                    std::to_string(line_no) + ": " + e.what());
    }
}

ordered_json read_header(std::ifstream& in, const std::filesystem::path& path,
                         const char* kind, std::size_t& line_no) {
    std::string line;
    if (!std::getline(in, line))
        throw Error(path.string() + ": missing header");
    ++line_no;
    ordered_json header = parse_or_throw(path, line, line_no);
    try {
        if (header.at("schema_version").get<int>() != kSchemaVersion)
            throw Error(path.string() + ": unsupported schema version " +
                        header.at("schema_version").dump());
        if (header.at("kind").get<std::string>() != kind)
            throw Error(path.string() + ": expected kind \"" + kind + "\", got " +
                        header.at("kind").dump());
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(path.string() + ": bad header: " + e.what());
    }
    return header;
}

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

} // namespace

void write_retrieval_items(const std::filesystem::path& path,
                           const std::vector<RetrievalItem>& items) {
    std::ofstream out = open_write(path);
    ordered_json header;
    header["schema_version"] = kSchemaVersion;
    header["kind"] = "retrieval_items";
    header["count"] = items.size();
    out << header.dump() << '\n';
    for (const RetrievalItem& it : items) out << item_to_json(it).dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<RetrievalItem> read_retrieval_items(const std::filesystem::path& path) {
    std::ifstream in = open_read(path);
    std::size_t line_no = 0;
    ordered_json header = read_header(in, path, "retrieval_items", line_no);
    const auto expected = header.at("count").get<std::size_t>();

    std::vector<RetrievalItem> items;
    items.reserve(expected);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = parse_or_throw(path, line, line_no);
        try {
            items.push_back(item_from_json(j));
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " +
                        std::to_string(line_no) + ": " + e.what());
        }
    }
    if (items.size() != expected)
        throw IntegrityError(path.string() + ": header count " +
                             std::to_string(expected) + " but " +
                             std::to_string(items.size()) + " records");
    return items;
}

void write_retrieval_split(const std::filesystem::path& path,
                           const RetrievalSplit& split) {
    split.validate();
    std::ofstream out = open_write(path);
    ordered_json header;
    header["schema_version"] = kSchemaVersion;
    header["kind"] = "retrieval_split";
    header["queries"] = split.queries.size();
    header["gallery"] = split.gallery.size();
    out << header.dump() << '\n';
    for (const RetrievalItem& it : split.queries) {
        ordered_json j;
        j["role"] = "query";
        j.update(item_to_json(it));
        out << j.dump() << '\n';
    }
    for (const RetrievalItem& it : split.gallery) {
        ordered_json j;
        j["role"] = "gallery";
        j.update(item_to_json(it));
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

RetrievalSplit read_retrieval_split(const std::filesystem::path& path) {
    std::ifstream in = open_read(path);
    std::size_t line_no = 0;
    ordered_json header = read_header(in, path, "retrieval_split", line_no);
    const auto expected_q = header.at("queries").get<std::size_t>();
    const auto expected_g = header.at("gallery").get<std::size_t>();

    RetrievalSplit split;
    split.queries.reserve(expected_q);
    split.gallery.reserve(expected_g);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = parse_or_throw(path, line, line_no);
        try {
            const auto role = j.at("role").get<std::string>();
            if (role == "query")
                split.queries.push_back(item_from_json(j));
            else if (role == "gallery")
                split.gallery.push_back(item_from_json(j));
            else
                throw Error("unknown role \"" + role + "\"");
        } catch (const std::exception& e) {
            throw Error(path.string() + ": malformed record at line " +
                        std::to_string(line_no) + ": " + e.what());
        }
    }
    if (split.queries.size() != expected_q || split.gallery.size() != expected_g)
        throw IntegrityError(path.string() + ": header counts " +
                             std::to_string(expected_q) + "/" + std::to_string(expected_g) +
                             " but " + std::to_string(split.queries.size()) + "/" +
                             std::to_string(split.gallery.size()) + " records");
    split.validate();
    return split;
}

void write_metric_report(const std::filesystem::path& path, const MetricReport& report) {
    ordered_json j;
    auto metric_map = [](const std::map<u32, double>& m) {
        ordered_json o = ordered_json::object();
        for (const auto& [k, v] : m) o[std::to_string(k)] = v;
        return o;
    };
    j["map_at"] = metric_map(report.map_at);
    j["recall_at"] = metric_map(report.recall_at);
    ordered_json styles = ordered_json::object();
    for (const auto& [label, sm] : report.per_style) {
        ordered_json s;
        s["queries"] = sm.query_count;
        s["map_at"] = metric_map(sm.map_at);
        s["recall_at"] = metric_map(sm.recall_at);
        styles[std::to_string(label)] = s;
    }
    j["per_style"] = styles;
    j["evaluated_queries"] = report.evaluated_queries;
    j["excluded_queries"] = report.excluded_queries;

    std::ofstream out = open_write(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace megacurate
