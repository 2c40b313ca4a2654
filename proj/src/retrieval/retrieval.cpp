#include "megacurate/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "megacurate/hash.hpp"
#include "megacurate/kernels.hpp"
#include "megacurate/log.hpp"
#include "megacurate/parallel.hpp"

namespace megacurate {

namespace {

constexpr u32 kQueryBlock = 64;

// Duplicate / overlap checks shared by validate() and evaluate(). Label
// coverage is deliberately not checked here: evaluate() downgrades orphan
// query labels to exclusion warnings.
void check_ids(const RetrievalSplit& s) {
    std::unordered_set<u64> gids;
    gids.reserve(s.gallery.size());
    for (const RetrievalItem& g : s.gallery)
        if (!gids.insert(g.id).second)
            throw IntegrityError("duplicate gallery id " + std::to_string(g.id));
    std::unordered_set<u64> qids;
    qids.reserve(s.queries.size());
    for (const RetrievalItem& q : s.queries) {
        if (!qids.insert(q.id).second)
            throw IntegrityError("duplicate query id " + std::to_string(q.id));
        if (gids.count(q.id))
            throw IntegrityError("item " + std::to_string(q.id) +
                                 " is both query and gallery");
    }
}

std::vector<double> cosine_scores(std::span<const float> query,
                                  const EmbeddingMatrix& gallery) {
    if (query.size() != gallery.dim)
        throw Error("query has dim " + std::to_string(query.size()) +
                    "; gallery has dim " + std::to_string(gallery.dim));
    double qn2 = kernels::squared_norm(query.data(), query.size());
    if (!(qn2 > 0.0) || !std::isfinite(qn2))
        throw Error("zero-norm or non-finite query vector");
    const double qn = std::sqrt(qn2);
    std::vector<double> scores(gallery.rows);
    kernels::dot_batch(query.data(), gallery.data.data(), gallery.rows,
                       gallery.dim, scores.data());
    for (u32 i = 0; i < gallery.rows; ++i) {
        double rn = 1.0;
        if (!gallery.normalized) {
            double rn2 = kernels::squared_norm(gallery.row(i), gallery.dim);
            if (!(rn2 > 0.0) || !std::isfinite(rn2))
                throw Error("zero-norm or non-finite gallery row " + std::to_string(i));
            rn = std::sqrt(rn2);
        }
        scores[i] = std::clamp(scores[i] / (qn * rn), -1.0, 1.0);
    }
    return scores;
}

// Gallery positions ordered by (descending score, ascending id).
std::vector<u32> ranking_order(const std::vector<double>& scores,
                               std::span<const u64> ids) {
    std::vector<u32> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](u32 a, u32 b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    return order;
}

// AP@k over rank-order relevance flags; requires total_relevant >= 1 and
// k <= rel.size().
double ap_at(const std::vector<unsigned char>& rel, u64 total_relevant, u32 k) {
    u64 seen = 0;
    double sum = 0.0;
    for (u32 i = 0; i < k; ++i) {
        if (!rel[i]) continue;
        ++seen;
        sum += static_cast<double>(seen) / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(std::min<u64>(k, total_relevant));
}

bool hit_at(const std::vector<unsigned char>& rel, u32 k) {
    for (u32 i = 0; i < k; ++i)
        if (rel[i]) return true;
    return false;
}

u64 label_of(const LabelMap& labels, u64 id) {
    auto it = labels.find(id);
    if (it == labels.end())
        throw IntegrityError("no label for item " + std::to_string(id));
    return it->second;
}

// Shared walk for the two ranked-list metrics: resolves relevance flags,
// applies the exclusion and clamping rules, and averages per_query values.
template <typename PerQuery>
double ranked_mean(const std::vector<RankedResult>& ranked, const LabelMap& labels,
                   u32 k, PerQuery per_query) {
    if (k == 0) throw ConfigError("k must be >= 1");
    double sum = 0.0;
    u64 counted = 0;
    bool warned_clamp = false;
    for (const RankedResult& rr : ranked) {
        const u64 qlabel = label_of(labels, rr.query_id);
        std::vector<unsigned char> rel(rr.gallery_ids.size(), 0);
        u64 total = 0;
        for (std::size_t i = 0; i < rr.gallery_ids.size(); ++i) {
            rel[i] = label_of(labels, rr.gallery_ids[i]) == qlabel ? 1 : 0;
            total += rel[i];
        }
        if (total == 0) {
            log_warn("query " + std::to_string(rr.query_id) + ": label " +
                     std::to_string(qlabel) + " absent from gallery; excluded");
            continue;
        }
        u32 kq = k;
        if (kq > rel.size()) {
            if (!warned_clamp) {
                log_warn("k=" + std::to_string(k) + " exceeds gallery size " +
                         std::to_string(rel.size()) + "; clamped");
                warned_clamp = true;
            }
            kq = static_cast<u32>(rel.size());
        }
        sum += per_query(rel, total, kq);
        ++counted;
    }
    if (counted == 0) throw Error("no scoreable queries");
    return sum / static_cast<double>(counted);
}

} // namespace

void RetrievalSplit::validate() const {
    check_ids(*this);
    std::unordered_set<u64> glabels;
    glabels.reserve(gallery.size());
    for (const RetrievalItem& g : gallery) glabels.insert(g.label);
    for (const RetrievalItem& q : queries)
        if (!glabels.count(q.label))
            throw IntegrityError("query " + std::to_string(q.id) + ": label " +
                                 std::to_string(q.label) + " absent from gallery");
}

std::map<u64, std::pair<u64, u64>> RetrievalSplit::per_style_counts() const {
    std::map<u64, std::pair<u64, u64>> counts;
    for (const RetrievalItem& q : queries) ++counts[q.label].first;
    for (const RetrievalItem& g : gallery) ++counts[g.label].second;
    return counts;
}

RetrievalSplit build_split(const std::vector<RetrievalItem>& items,
                           u32 queries_per_style, u64 seed) {
    std::map<u64, std::vector<u32>> by_style; // label -> item indices, input order
    std::unordered_set<u64> seen;
    seen.reserve(items.size());
    for (u32 i = 0; i < items.size(); ++i) {
        if (!seen.insert(items[i].id).second)
            throw IntegrityError("duplicate item id " + std::to_string(items[i].id));
        by_style[items[i].label].push_back(i);
    }

    RetrievalSplit split;
    split.queries.reserve(std::size_t(queries_per_style) * by_style.size());
    split.gallery.reserve(items.size());
    for (auto& [label, idx] : by_style) {
        if (idx.size() <= queries_per_style)
            throw ConfigError("style " + std::to_string(label) + " has " +
                              std::to_string(idx.size()) + " items; need more than " +
                              std::to_string(queries_per_style));
        // Partial Fisher-Yates on a per-label stream: the query subset is
        // uniform and independent of how other styles are interleaved.
        Rng rng = Rng::substream(seed, label);
        for (u32 i = 0; i < queries_per_style; ++i) {
            u64 j = i + rng.next_below(idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        for (u32 i = 0; i < idx.size(); ++i)
            (i < queries_per_style ? split.queries : split.gallery)
                .push_back(items[idx[i]]);
    }
    auto by_id = [](const RetrievalItem& a, const RetrievalItem& b) { return a.id < b.id; };
    std::sort(split.queries.begin(), split.queries.end(), by_id);
    std::sort(split.gallery.begin(), split.gallery.end(), by_id);
    split.validate();
    return split;
}

RankedResult rank_gallery(u64 query_id, std::span<const float> query_emb,
                          const EmbeddingMatrix& gallery,
                          std::span<const u64> gallery_ids) {
    if (gallery_ids.size() != gallery.rows)
        throw Error("gallery has " + std::to_string(gallery.rows) + " rows but " +
                    std::to_string(gallery_ids.size()) + " ids");
    std::unordered_set<u64> seen(gallery_ids.begin(), gallery_ids.end());
    if (seen.size() != gallery_ids.size())
        throw IntegrityError("duplicate gallery ids");

    std::vector<double> scores = cosine_scores(query_emb, gallery);
    std::vector<u32> order = ranking_order(scores, gallery_ids);

    RankedResult out;
    out.query_id = query_id;
    out.gallery_ids.resize(order.size());
    out.scores.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.gallery_ids[i] = gallery_ids[order[i]];
        out.scores[i] = scores[order[i]];
    }
    return out;
}

RankedResult rank_gallery(std::span<const float> query_emb,
                          const EmbeddingMatrix& gallery) {
    std::vector<u64> ids(gallery.rows);
    std::iota(ids.begin(), ids.end(), u64{0});
    return rank_gallery(0, query_emb, gallery, ids);
}

double recall_at_k(const std::vector<RankedResult>& ranked, const LabelMap& labels,
                   u32 k) {
    return ranked_mean(ranked, labels, k,
                       [](const std::vector<unsigned char>& rel, u64, u32 kq) {
                           return hit_at(rel, kq) ? 1.0 : 0.0;
                       });
}

double map_at_k(const std::vector<RankedResult>& ranked, const LabelMap& labels,
                u32 k) {
    return ranked_mean(ranked, labels, k,
                       [](const std::vector<unsigned char>& rel, u64 total, u32 kq) {
                           return ap_at(rel, total, kq);
                       });
}

MetricReport evaluate(const RetrievalSplit& split, const EmbeddingMatrix& embeddings,
                      const std::vector<u32>& ks) {
    if (ks.empty()) throw ConfigError("k list is empty");
    std::vector<u32> kk(ks);
    std::sort(kk.begin(), kk.end());
    kk.erase(std::unique(kk.begin(), kk.end()), kk.end());
    if (kk.front() == 0) throw ConfigError("k must be >= 1");
    embeddings.validate();
    check_ids(split);
    for (const RetrievalItem& it : split.queries)
        if (it.embedding_row >= embeddings.rows)
            throw IntegrityError("query " + std::to_string(it.id) +
                                 ": embedding row " + std::to_string(it.embedding_row) +
                                 " out of range");
    for (const RetrievalItem& it : split.gallery)
        if (it.embedding_row >= embeddings.rows)
            throw IntegrityError("gallery item " + std::to_string(it.id) +
                                 ": embedding row " + std::to_string(it.embedding_row) +
                                 " out of range");
    const u32 q_count = static_cast<u32>(split.queries.size());
    const u32 g_count = static_cast<u32>(split.gallery.size());
    if (q_count == 0) throw Error("no scoreable queries");
    if (g_count == 0) throw Error("empty gallery");

    EmbeddingMatrix gal(g_count, embeddings.dim, embeddings.normalized);
    std::vector<u64> gids(g_count);
    std::vector<u64> glabels(g_count);
    std::map<u64, u64> gallery_label_count;
    for (u32 i = 0; i < g_count; ++i) {
        const RetrievalItem& g = split.gallery[i];
        std::copy_n(embeddings.row(g.embedding_row), embeddings.dim, gal.row(i));
        gids[i] = g.id;
        glabels[i] = g.label;
        ++gallery_label_count[g.label];
    }

    const u32 nk = static_cast<u32>(kk.size());
    if (kk.back() > g_count)
        log_warn("k=" + std::to_string(kk.back()) + " exceeds gallery size " +
                 std::to_string(g_count) + "; clamped");

    std::vector<double> ap(std::size_t(q_count) * nk, 0.0);
    std::vector<double> hit(std::size_t(q_count) * nk, 0.0);
    std::vector<unsigned char> excluded(q_count, 0);

    parallel_for_blocks(q_count, kQueryBlock, [&](std::size_t, std::size_t begin,
                                                  std::size_t end) {
        std::vector<unsigned char> rel(g_count);
        for (std::size_t q = begin; q < end; ++q) {
            const RetrievalItem& query = split.queries[q];
            auto found = gallery_label_count.find(query.label);
            if (found == gallery_label_count.end()) {
                excluded[q] = 1;
                continue;
            }
            const u64 total = found->second;
            std::vector<double> scores =
                cosine_scores(embeddings.row_span(query.embedding_row), gal);
            std::vector<u32> order = ranking_order(scores, gids);
            for (u32 i = 0; i < g_count; ++i)
                rel[i] = glabels[order[i]] == query.label ? 1 : 0;
            for (u32 ki = 0; ki < nk; ++ki) {
                const u32 kq = std::min(kk[ki], g_count);
                ap[q * nk + ki] = ap_at(rel, total, kq);
                hit[q * nk + ki] = hit_at(rel, kq) ? 1.0 : 0.0;
            }
        }
    });

    // Fixed-order reduction: per-style sums in query order, then overall
    // numbers from the per-style sums in label order, so the breakdown's
    // query-weighted means compose back into the headline values.
    struct Acc {
        u64 n = 0;
        std::vector<double> ap_sum, hit_sum;
    };
    std::map<u64, Acc> styles;
    for (u32 q = 0; q < q_count; ++q) {
        const RetrievalItem& query = split.queries[q];
        if (excluded[q]) {
            log_warn("query " + std::to_string(query.id) + ": label " +
                     std::to_string(query.label) + " absent from gallery; excluded");
            continue;
        }
        Acc& acc = styles[query.label];
        if (acc.n == 0) {
            acc.ap_sum.assign(nk, 0.0);
            acc.hit_sum.assign(nk, 0.0);
        }
        ++acc.n;
        for (u32 ki = 0; ki < nk; ++ki) {
            acc.ap_sum[ki] += ap[q * nk + ki];
            acc.hit_sum[ki] += hit[q * nk + ki];
        }
    }

    MetricReport report;
    for (const auto& [label, acc] : styles) {
        report.evaluated_queries += acc.n;
        StyleMetrics& sm = report.per_style[label];
        sm.query_count = acc.n;
        for (u32 ki = 0; ki < nk; ++ki) {
            sm.map_at[kk[ki]] = acc.ap_sum[ki] / static_cast<double>(acc.n);
            sm.recall_at[kk[ki]] = acc.hit_sum[ki] / static_cast<double>(acc.n);
        }
    }
    if (report.evaluated_queries == 0) throw Error("no scoreable queries");
    report.excluded_queries = q_count - report.evaluated_queries;
    for (u32 ki = 0; ki < nk; ++ki) {
        double ap_total = 0.0, hit_total = 0.0;
        for (const auto& [label, acc] : styles) {
            ap_total += acc.ap_sum[ki];
            hit_total += acc.hit_sum[ki];
        }
        report.map_at[kk[ki]] = ap_total / static_cast<double>(report.evaluated_queries);
        report.recall_at[kk[ki]] = hit_total / static_cast<double>(report.evaluated_queries);
    }
    return report;
}

} // namespace megacurate
