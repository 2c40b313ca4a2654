#include "megacurate/balance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "megacurate/hash.hpp"
#include "megacurate/kernels.hpp"
#include "megacurate/parallel.hpp"

namespace megacurate {

namespace {

constexpr std::size_t kBlock = 1024;

// Sum of per-block partials in block-index order: parallel yet invariant
// under thread count.
double ordered_sum(const std::vector<double>& partials) {
    double total = 0.0;
    for (double p : partials) total += p;
    return total;
}

void check_finite(const EmbeddingMatrix& points) {
    for (float v : points.data)
        if (!std::isfinite(v)) throw Error("k-means: non-finite input");
}

// Squared distance from an f32 point to an f64 centroid via the expansion
// |p|^2 - 2 p.c + |c|^2; all three pieces are f64 accumulations.
double point_center_d2(const float* p, double pn2, const double* c, double cn2,
                       std::size_t dim) {
    double d2 = pn2 - 2.0 * kernels::dot_f32f64(p, c, dim) + cn2;
    return d2 < 0.0 ? 0.0 : d2;
}

struct PlusPlusInit {
    std::vector<double> centroids; // k * dim
    std::vector<double> dist2;     // current distance to nearest chosen center
};

PlusPlusInit kmeanspp(const EmbeddingMatrix& points, u32 k, const std::vector<double>& pn2,
                      Rng& rng) {
    const std::size_t n = points.rows, dim = points.dim;
    PlusPlusInit out;
    out.centroids.assign(static_cast<std::size_t>(k) * dim, 0.0);
    out.dist2.assign(n, 0.0);
    std::vector<char> chosen(n, 0);

    auto install = [&](u32 slot, std::size_t point) {
        const float* row = points.row(point);
        for (std::size_t d = 0; d < dim; ++d)
            out.centroids[static_cast<std::size_t>(slot) * dim + d] = row[d];
        chosen[point] = 1;
    };
    auto refresh = [&](u32 slot, bool first) {
        const double* c = out.centroids.data() + static_cast<std::size_t>(slot) * dim;
        double cn2 = kernels::dot_f64(c, c, dim);
        parallel_for_blocks(n, kBlock, [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                double d2 = point_center_d2(points.row(i), pn2[i], c, cn2, dim);
                if (first || d2 < out.dist2[i]) out.dist2[i] = d2;
            }
        });
    };

    install(0, rng.next_below(n));
    refresh(0, true);
    for (u32 j = 1; j < k; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += out.dist2[i];
        std::size_t pick = n;
        if (total > 0.0) {
            double r = rng.next_double() * total;
            double cum = 0.0;
            std::size_t last_positive = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (out.dist2[i] <= 0.0) continue;
                last_positive = i;
                cum += out.dist2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) pick = last_positive; // r hit the rounding tail
        }
        if (pick == n) {
            // All remaining mass is zero (duplicate points): take the
            // smallest index not yet serving as a center.
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        install(j, pick);
        refresh(j, false);
    }
    return out;
}

} // namespace

void KMeansConfig::validate() const {
    if (levels.empty()) throw ConfigError("k-means: levels must be non-empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == 0) throw ConfigError("k-means: every level size must be >= 1");
        if (i > 0 && levels[i] >= levels[i - 1])
            throw ConfigError("k-means: level sizes must be strictly decreasing");
    }
    if (max_iters == 0) throw ConfigError("k-means: max_iters must be >= 1");
    if (tol < 0.0) throw ConfigError("k-means: tol must be >= 0");
}

EmbeddingMatrix KMeansResult::centroids_f32() const {
    EmbeddingMatrix m(k, dim);
    for (std::size_t i = 0; i < centroids.size(); ++i)
        m.data[i] = static_cast<float>(centroids[i]);
    return m;
}

KMeansResult lloyd_kmeans(const EmbeddingMatrix& points, u32 k, const KMeansConfig& cfg) {
    const std::size_t n = points.rows, dim = points.dim;
    if (k == 0 || k > n)
        throw Error("k-means: k must lie in [1, rows], got k=" + std::to_string(k) +
                    " rows=" + std::to_string(n));
    check_finite(points);

    std::vector<double> pn2(n);
    parallel_for_blocks(n, kBlock, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            pn2[i] = kernels::squared_norm(points.row(i), dim);
    });

    Rng rng(cfg.seed);
    PlusPlusInit init = kmeanspp(points, k, pn2, rng);

    KMeansResult res;
    res.k = k;
    res.dim = static_cast<u32>(dim);
    res.assignments.assign(n, 0);
    res.centroids = std::move(init.centroids);
    std::vector<double> cn2(k);
    std::vector<double> best(n);
    std::vector<u64> counts(k);
    std::vector<std::size_t> offsets(k + 1);
    std::vector<u32> members(n);
    const std::size_t blocks = block_count(n, kBlock);
    std::vector<double> partial(blocks);
    std::vector<char> block_changed(blocks);

    double prev_inertia = std::numeric_limits<double>::infinity();
    for (u32 iter = 0; iter < cfg.max_iters; ++iter) {
        for (u32 c = 0; c < k; ++c)
            cn2[c] = kernels::dot_f64(res.centroids.data() + static_cast<std::size_t>(c) * dim,
                                      res.centroids.data() + static_cast<std::size_t>(c) * dim,
                                      dim);

        // Assignment: per-point argmin; ties go to the lower cluster index.
        parallel_for_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
            double local = 0.0;
            char changed = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const float* p = points.row(i);
                u32 arg = 0;
                double best_score = std::numeric_limits<double>::infinity();
                for (u32 c = 0; c < k; ++c) {
                    const double* cc = res.centroids.data() + static_cast<std::size_t>(c) * dim;
                    double score = cn2[c] - 2.0 * kernels::dot_f32f64(p, cc, dim);
                    if (score < best_score) {
                        best_score = score;
                        arg = c;
                    }
                }
                double d2 = pn2[i] + best_score;
                if (d2 < 0.0) d2 = 0.0;
                if (res.assignments[i] != arg || iter == 0) changed = 1;
                res.assignments[i] = arg;
                best[i] = d2;
                local += d2;
            }
            partial[b] = local;
            block_changed[b] = changed;
        });
        double inertia = ordered_sum(partial);
        res.inertia_trace.push_back(inertia);
        bool stable = iter > 0;
        for (std::size_t b = 0; b < blocks && stable; ++b) stable = !block_changed[b];
        bool converged =
            iter > 0 && (prev_inertia == 0.0 ||
                         (prev_inertia - inertia) < cfg.tol * prev_inertia);
        prev_inertia = inertia;

        // Update: counting-sort members, then per-cluster means summed in
        // member order — a fixed-order parallel reduction.
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[res.assignments[i]];
        offsets[0] = 0;
        for (u32 c = 0; c < k; ++c) offsets[c + 1] = offsets[c] + counts[c];
        {
            std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
            for (std::size_t i = 0; i < n; ++i)
                members[cursor[res.assignments[i]]++] = static_cast<u32>(i);
        }
        parallel_for_blocks(k, 64, [&](std::size_t, std::size_t cbegin, std::size_t cend) {
            for (std::size_t c = cbegin; c < cend; ++c) {
                if (counts[c] == 0) continue;
                double* acc = res.centroids.data() + c * dim;
                std::fill(acc, acc + dim, 0.0);
                for (std::size_t m = offsets[c]; m < offsets[c + 1]; ++m)
                    kernels::accumulate(acc, points.row(members[m]), dim);
                double inv = 1.0 / static_cast<double>(counts[c]);
                for (std::size_t d = 0; d < dim; ++d) acc[d] *= inv;
            }
        });

        // Empty-cluster repair: reseed each from the point currently
        // farthest from its centroid (assignment-pass distances), skipping
        // points already used and exact-fit points (d2 == 0).
        for (u32 c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            double far_d2 = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (best[i] > far_d2) {
                    far_d2 = best[i];
                    far = i;
                }
            if (far == n) break; // every point sits exactly on a centroid
            const float* row = points.row(far);
            double* acc = res.centroids.data() + static_cast<std::size_t>(c) * dim;
            for (std::size_t d = 0; d < dim; ++d) acc[d] = row[d];
            best[far] = 0.0; // spent; the next empty cluster picks elsewhere
        }

        if (stable || converged) break;
    }
    return res;
}

void ClusterTree::validate() const {
    if (levels.empty()) throw IntegrityError("cluster tree: no levels");
    u64 lowest_total = 0;
    for (u64 s : levels[0].sizes) lowest_total += s;
    if (lowest_total != total_items)
        throw IntegrityError("cluster tree: lowest-level sizes sum to " +
                             std::to_string(lowest_total) + ", expected " +
                             std::to_string(total_items));
    if (levels[0].assignments.size() != total_items)
        throw IntegrityError("cluster tree: lowest-level assignment count mismatch");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const ClusterLevel& lev = levels[l];
        if (lev.sizes.size() != lev.k || lev.centroids.rows != lev.k)
            throw IntegrityError("cluster tree: level shape mismatch");
        for (u32 a : lev.assignments)
            if (a >= lev.k) throw IntegrityError("cluster tree: assignment out of range");
        bool top = l + 1 == levels.size();
        if (top != lev.parent.empty())
            throw IntegrityError("cluster tree: parent links missing or unexpected");
        if (!top) {
            if (lev.parent.size() != lev.k)
                throw IntegrityError("cluster tree: parent link count mismatch");
            std::vector<u64> agg(levels[l + 1].k, 0);
            for (u32 c = 0; c < lev.k; ++c) {
                if (lev.parent[c] >= levels[l + 1].k)
                    throw IntegrityError("cluster tree: parent index out of range");
                agg[lev.parent[c]] += lev.sizes[c];
            }
            if (agg != levels[l + 1].sizes)
                throw IntegrityError("cluster tree: level " + std::to_string(l + 1) +
                                     " sizes do not aggregate the level below");
        }
    }
}

ClusterTree build_cluster_tree(const EmbeddingMatrix& points, const KMeansConfig& cfg) {
    cfg.validate();
    if (points.rows < cfg.levels[0])
        throw Error("cluster tree: " + std::to_string(points.rows) +
                    " rows cannot fill " + std::to_string(cfg.levels[0]) + " clusters");

    ClusterTree tree;
    tree.total_items = points.rows;
    const EmbeddingMatrix* cur = &points;
    EmbeddingMatrix scratch;
    for (std::size_t l = 0; l < cfg.levels.size(); ++l) {
        KMeansConfig local = cfg;
        u64 mix = cfg.seed + 0x9e3779b97f4a7c15ull * (l + 1);
        local.seed = splitmix64(mix);
        KMeansResult res = lloyd_kmeans(*cur, cfg.levels[l], local);
        ClusterLevel lev;
        lev.k = res.k;
        lev.assignments = std::move(res.assignments);
        lev.centroids = res.centroids_f32();
        tree.levels.push_back(std::move(lev));
        scratch = tree.levels.back().centroids;
        cur = &scratch;
    }
    // Parent links: level l+1 clustered level-l centroids, so its
    // assignment vector is exactly the parent map of level l.
    for (std::size_t l = 0; l + 1 < tree.levels.size(); ++l)
        tree.levels[l].parent = tree.levels[l + 1].assignments;
    // Sizes: raw counts at the bottom, aggregated mass above.
    tree.levels[0].sizes.assign(tree.levels[0].k, 0);
    for (u32 a : tree.levels[0].assignments) ++tree.levels[0].sizes[a];
    for (std::size_t l = 1; l < tree.levels.size(); ++l) {
        tree.levels[l].sizes.assign(tree.levels[l].k, 0);
        for (u32 c = 0; c < tree.levels[l - 1].k; ++c)
            tree.levels[l].sizes[tree.levels[l - 1].parent[c]] +=
                tree.levels[l - 1].sizes[c];
    }
    tree.validate();
    return tree;
}

namespace {

// f(n) = sum_j min(n, sizes[j]) evaluated from an ascending copy and its
// prefix sums.
struct CapCurve {
    std::vector<u64> sorted;
    std::vector<u64> prefix; // prefix[i] = sum of sorted[0..i)
    explicit CapCurve(const std::vector<u64>& sizes) : sorted(sizes) {
        std::sort(sorted.begin(), sorted.end());
        prefix.resize(sorted.size() + 1, 0);
        for (std::size_t i = 0; i < sorted.size(); ++i)
            prefix[i + 1] = prefix[i] + sorted[i];
    }
    u64 eval(u64 n) const {
        std::size_t idx =
            std::upper_bound(sorted.begin(), sorted.end(), n) - sorted.begin();
        return prefix[idx] + n * (sorted.size() - idx);
    }
    u64 max_size() const { return sorted.back(); }
    // Largest n in [0, max] with f(n) <= budget; f(0) = 0 <= budget always.
    u64 undershoot(u64 budget) const {
        u64 lo = 0, hi = max_size();
        while (lo < hi) {
            u64 mid = lo + (hi - lo + 1) / 2;
            if (eval(mid) <= budget)
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo;
    }
};

} // namespace

u64 compute_shared_cap(const std::vector<u64>& sizes, u64 budget) {
    if (sizes.empty()) throw Error("shared cap: sizes must be non-empty");
    for (u64 s : sizes)
        if (s == 0) throw Error("shared cap: all sizes must be >= 1");
    CapCurve curve(sizes);
    u64 n0 = curve.undershoot(budget);
    if (n0 == curve.max_size()) return n0; // saturated: f is flat beyond
    u64 under_err = budget - curve.eval(n0);
    u64 over_err = curve.eval(n0 + 1) - budget;
    return over_err < under_err ? n0 + 1 : n0; // ties keep the smaller n
}

namespace {

// Allocates exactly `budget` across children with capacities g: shared
// cap rounded down, then +1 to a seeded uniform choice of children that
// still have headroom. Requires budget <= sum(g).
std::vector<u64> exact_allocate(const std::vector<u64>& g, u64 budget, Rng& rng) {
    std::vector<u64> alloc(g.size(), 0);
    if (budget == 0) return alloc;
    CapCurve curve(g);
    u64 n0 = curve.undershoot(budget);
    u64 total = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        alloc[i] = std::min<u64>(n0, g[i]);
        total += alloc[i];
    }
    u64 r = budget - total;
    if (r == 0) return alloc;
    std::vector<u32> eligible;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i] > alloc[i]) eligible.push_back(static_cast<u32>(i));
    // f(n0+1) > budget means strictly more than r children have headroom.
    if (r >= eligible.size())
        throw Error("balanced sampling: internal allocation infeasibility");
    for (u64 t = 0; t < r; ++t) {
        std::size_t j = t + rng.next_below(eligible.size() - t);
        std::swap(eligible[t], eligible[j]);
        ++alloc[eligible[t]];
    }
    return alloc;
}

u64 node_tag(std::size_t level, u64 cluster) {
    return (static_cast<u64>(level + 1) << 32) ^ cluster;
}

} // namespace

SampleResult hierarchical_sample(const ClusterTree& tree, u64 budget, u64 seed, bool strict) {
    tree.validate();
    if (budget == 0 || budget > tree.total_items)
        throw Error("balanced sampling: budget must lie in [1, total items]");

    const std::size_t L = tree.levels.size();
    // Child lists: children[l][c] = clusters of level l-1 under c.
    std::vector<std::vector<std::vector<u32>>> children(L);
    for (std::size_t l = 1; l < L; ++l) {
        children[l].assign(tree.levels[l].k, {});
        for (u32 c = 0; c < tree.levels[l - 1].k; ++c)
            children[l][tree.levels[l - 1].parent[c]].push_back(c);
    }

    // Top-level allocation: the paper's rounded shared cap, exact only
    // under --strict.
    const ClusterLevel& top = tree.levels[L - 1];
    std::vector<u64> top_alloc(top.k, 0);
    long long residual = 0;
    if (strict) {
        Rng rng = Rng::substream(seed, node_tag(L, 0));
        top_alloc = exact_allocate(top.sizes, budget, rng);
    } else {
        u64 cap = compute_shared_cap(top.sizes, budget);
        u64 total = 0;
        for (u32 c = 0; c < top.k; ++c) {
            top_alloc[c] = std::min<u64>(cap, top.sizes[c]);
            total += top_alloc[c];
        }
        residual = static_cast<long long>(total) - static_cast<long long>(budget);
    }

    // Walk down: each node hands its children an exact split of its own
    // allocation, so no further residual accumulates below the top.
    std::vector<u64> alloc = std::move(top_alloc);
    for (std::size_t l = L - 1; l > 0; --l) {
        std::vector<u64> next(tree.levels[l - 1].k, 0);
        for (u32 c = 0; c < tree.levels[l].k; ++c) {
            if (alloc[c] == 0) continue;
            const std::vector<u32>& kids = children[l][c];
            std::vector<u64> g(kids.size());
            for (std::size_t i = 0; i < kids.size(); ++i)
                g[i] = tree.levels[l - 1].sizes[kids[i]];
            Rng rng = Rng::substream(seed, node_tag(l, c));
            std::vector<u64> split = exact_allocate(g, alloc[c], rng);
            for (std::size_t i = 0; i < kids.size(); ++i) next[kids[i]] = split[i];
        }
        alloc = std::move(next);
    }

    // Leaves: uniform draw without replacement from each cluster's items.
    std::vector<std::vector<u32>> members(tree.levels[0].k);
    for (u32 c = 0; c < tree.levels[0].k; ++c)
        members[c].reserve(tree.levels[0].sizes[c]);
    for (std::size_t i = 0; i < tree.levels[0].assignments.size(); ++i)
        members[tree.levels[0].assignments[i]].push_back(static_cast<u32>(i));

    SampleResult out;
    out.residual = residual;
    for (u32 c = 0; c < tree.levels[0].k; ++c) {
        u64 want = alloc[c];
        if (want > members[c].size())
            throw Error("balanced sampling: allocation exceeds cluster size");
        if (want == 0) continue;
        Rng rng = Rng::substream(seed, node_tag(0, c));
        std::vector<u32>& m = members[c];
        for (u64 t = 0; t < want; ++t) {
            std::size_t j = t + rng.next_below(m.size() - t);
            std::swap(m[t], m[j]);
            out.selected.push_back(m[t]);
        }
    }
    std::sort(out.selected.begin(), out.selected.end());
    return out;
}

std::vector<BalanceReportRow> balance_report(const ClusterTree& tree,
                                             const std::vector<u64>& selected) {
    const ClusterLevel& leaves = tree.levels.at(0);
    std::vector<BalanceReportRow> rows(leaves.k);
    for (u32 c = 0; c < leaves.k; ++c) {
        rows[c].cluster = c;
        rows[c].raw = leaves.sizes[c];
        rows[c].raw_share =
            static_cast<double>(leaves.sizes[c]) / static_cast<double>(tree.total_items);
    }
    for (u64 item : selected) {
        if (item >= leaves.assignments.size())
            throw Error("balance report: selected item out of range");
        ++rows[leaves.assignments[item]].selected;
    }
    if (!selected.empty())
        for (auto& r : rows)
            r.selected_share =
                static_cast<double>(r.selected) / static_cast<double>(selected.size());
    return rows;
}

} // namespace megacurate
