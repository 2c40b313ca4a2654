#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "megacurate/embedding.hpp"

namespace megacurate {

// One benchmark item: an image identified by id, tagged with its style
// label, embedded at a row of the benchmark embedding matrix.
struct RetrievalItem {
    u64 id = 0;
    u64 label = 0;
    u32 embedding_row = 0;

    bool operator==(const RetrievalItem&) const = default;
};

// Query/gallery partition of a benchmark.
struct RetrievalSplit {
    std::vector<RetrievalItem> queries;
    std::vector<RetrievalItem> gallery;

    // Throws IntegrityError on duplicate ids, query/gallery id overlap, or
    // a query label with no gallery item.
    void validate() const;
    // label -> {query count, gallery count}
    std::map<u64, std::pair<u64, u64>> per_style_counts() const;

    bool operator==(const RetrievalSplit&) const = default;
};

// Seeded uniform choice of queries_per_style queries per style; the rest of
// each style is the gallery. Both sides come back sorted by id. Every style
// must have more items than queries_per_style (ConfigError naming the first
// style that does not). Deterministic in (items, queries_per_style, seed)
// and independent of style iteration order.
RetrievalSplit build_split(const std::vector<RetrievalItem>& items,
                           u32 queries_per_style, u64 seed);

// One query's gallery ordering: descending cosine similarity, ties broken
// by ascending gallery id. gallery_ids is a permutation of the gallery and
// scores are the matching cosines, non-increasing.
struct RankedResult {
    u64 query_id = 0;
    std::vector<u64> gallery_ids;
    std::vector<double> scores;
};

// Ranks the gallery rows against one query. The base overload uses row
// indices as gallery ids; the second tags the result with external ids
// (one per row, duplicates rejected). Throws Error on dimension mismatch
// or a zero-norm vector.
RankedResult rank_gallery(std::span<const float> query_emb,
                          const EmbeddingMatrix& gallery);
RankedResult rank_gallery(u64 query_id, std::span<const float> query_emb,
                          const EmbeddingMatrix& gallery,
                          std::span<const u64> gallery_ids);

// item id -> style label, covering every query and gallery id that the
// metric ops see. A missing id is an IntegrityError.
using LabelMap = std::map<u64, u64>;

// Fraction of queries with at least one same-label gallery item in the
// top k. Queries whose label is absent from their gallery are excluded
// with a warning (scoring them zero would break the k=1 identity with
// map_at_k). k larger than the gallery is clamped with a warning; k = 0
// is a ConfigError; no scoreable query is an Error.
double recall_at_k(const std::vector<RankedResult>& ranked,
                   const LabelMap& labels, u32 k);

// Mean over queries of AP@k, where for a query with R same-label gallery
// items AP@k = (1/min(k, R)) * sum_{i=1..k} rel_i * (sum_{j<=i} rel_j) / i.
// Exclusion, clamping, and error behavior match recall_at_k.
double map_at_k(const std::vector<RankedResult>& ranked,
                const LabelMap& labels, u32 k);

struct StyleMetrics {
    u64 query_count = 0;            // evaluated queries with this label
    std::map<u32, double> map_at;   // k -> mAP@k over those queries
    std::map<u32, double> recall_at;

    bool operator==(const StyleMetrics&) const = default;
};

struct MetricReport {
    std::map<u32, double> map_at;
    std::map<u32, double> recall_at;
    std::map<u64, StyleMetrics> per_style;
    u64 evaluated_queries = 0;
    u64 excluded_queries = 0;

    bool operator==(const MetricReport&) const = default;
};

// Ranks every query against the split's gallery and scores mAP@k and
// Recall@k at each k (default {1, 10}), with a per-style breakdown whose
// query-weighted means reproduce the overall numbers. Queries and scoring
// run in deterministic parallel blocks. Throws IntegrityError when an
// embedding row is out of range, ConfigError on an empty or zero k list.
MetricReport evaluate(const RetrievalSplit& split,
                      const EmbeddingMatrix& embeddings,
                      const std::vector<u32>& ks = {1, 10});

// Benchmark item list: UTF-8 JSONL, header {schema_version, kind, count}
// then one {id, label, row} object per item.
void write_retrieval_items(const std::filesystem::path& path,
                           const std::vector<RetrievalItem>& items);
std::vector<RetrievalItem> read_retrieval_items(const std::filesystem::path& path);

// Split file: UTF-8 JSONL, header {schema_version, kind, queries, gallery}
// then one {role, id, label, row} object per item. Reading validates the
// split, so hand-built files with overlap or orphan query labels fail.
void write_retrieval_split(const std::filesystem::path& path,
                           const RetrievalSplit& split);
RetrievalSplit read_retrieval_split(const std::filesystem::path& path);

// Single pretty-printed JSON object with map_at / recall_at / per_style /
// query counts; key order is fixed so equal reports serialize identically.
void write_metric_report(const std::filesystem::path& path,
                         const MetricReport& report);

} // namespace megacurate
