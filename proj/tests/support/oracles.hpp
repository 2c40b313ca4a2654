#pragma once

// Independent reference implementations used to check production code.
// Everything here is deliberately naive: extended precision, exhaustive
// scans, direct formula transcriptions. Nothing in src/ may be included
// from this header beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Neumaier-compensated long-double dot product.
inline long double dot_ld(const float* a, const float* b, std::size_t n) {
    long double sum = 0.0L, comp = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        long double term = static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
        long double t = sum + term;
        if (std::fabs(sum) >= std::fabs(term))
            comp += (sum - t) + term;
        else
            comp += (term - t) + sum;
        sum = t;
    }
    return sum + comp;
}

inline long double squared_norm_ld(const float* a, std::size_t n) { return dot_ld(a, a, n); }

inline long double cosine_ld(const std::vector<float>& a, const std::vector<float>& b) {
    long double d = dot_ld(a.data(), b.data(), a.size());
    long double na = std::sqrt(squared_norm_ld(a.data(), a.size()));
    long double nb = std::sqrt(squared_norm_ld(b.data(), b.size()));
    return d / (na * nb);
}

// Exact Jaccard over two shingle sets.
inline double jaccard_exact(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& s : a) inter += b.count(s);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Exhaustive greedy semantic-duplicate scan in id order: index i is
// dropped iff cosine(i, some earlier survivor) >= threshold. Embeddings
// are unit-norm rows of dim `dim`.
inline std::vector<bool> semantic_drop_exhaustive(const std::vector<float>& rows,
                                                  std::size_t dim, double threshold) {
    std::size_t n = rows.size() / dim;
    std::vector<bool> dropped(n, false);
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < n; ++i) {
        bool drop = false;
        for (std::size_t s : survivors) {
            long double c = dot_ld(rows.data() + i * dim, rows.data() + s * dim, dim);
            if (static_cast<double>(c) >= threshold) {
                drop = true;
                break;
            }
        }
        dropped[i] = drop;
        if (!drop) survivors.push_back(i);
    }
    return dropped;
}

// Brute-force retrieval metrics. `ranking` is gallery indices best-first;
// `relevant` marks gallery items sharing the query's style.
inline double recall_at_k(const std::vector<std::size_t>& ranking,
                          const std::vector<bool>& relevant, std::size_t k) {
    std::size_t total = 0;
    for (bool r : relevant) total += r;
    if (total == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
        hits += relevant[ranking[i]];
    return static_cast<double>(hits) / static_cast<double>(total);
}

// AP@k with min(k, R) normalization: sum of precision-at-hit over the
// first k positions, divided by min(k, number of relevant items).
inline double ap_at_k(const std::vector<std::size_t>& ranking,
                      const std::vector<bool>& relevant, std::size_t k) {
    std::size_t total = 0;
    for (bool r : relevant) total += r;
    if (total == 0) return 0.0;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        if (relevant[ranking[i]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(std::min(k, total));
}

// Direct long-double transcription of the supervised contrastive loss:
// mean over anchors with non-empty positive sets of
//   -(1/|P(i)|) sum_{p in P(i)} log( exp(z_i.z_p/tau) / sum_{a != i} exp(z_i.z_a/tau) ).
// `z` holds unit-norm rows. Returns the mean and the included-anchor count.
struct SclOracleResult {
    long double loss;
    std::size_t included;
};
inline SclOracleResult scl_loss_ld(const std::vector<std::vector<float>>& z,
                                   const std::vector<int>& labels, double tau) {
    std::size_t n = z.size();
    long double total = 0.0L;
    std::size_t included = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pos;
        for (std::size_t p = 0; p < n; ++p)
            if (p != i && labels[p] == labels[i]) pos.push_back(p);
        if (pos.empty()) continue;
        long double denom = 0.0L;
        for (std::size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            denom += std::exp(dot_ld(z[i].data(), z[a].data(), z[i].size()) /
                              static_cast<long double>(tau));
        }
        long double anchor = 0.0L;
        for (std::size_t p : pos) {
            long double num = std::exp(dot_ld(z[i].data(), z[p].data(), z[i].size()) /
                                       static_cast<long double>(tau));
            anchor += std::log(num / denom);
        }
        total += -anchor / static_cast<long double>(pos.size());
        ++included;
    }
    return {included ? total / static_cast<long double>(included) : 0.0L, included};
}

// Direct transcription of the sigmoid image-text loss:
// (1/B^2) sum_ij log(1 + exp(-y_ij * z_i.t_j)), y in {+1,-1}.
inline long double itc_loss_ld(const std::vector<std::vector<float>>& z,
                               const std::vector<std::vector<float>>& t,
                               const std::vector<std::vector<int>>& y) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j) {
            long double u = dot_ld(z[i].data(), t[j].data(), z[i].size());
            total += std::log(1.0L + std::exp(-static_cast<long double>(y[i][j]) * u));
        }
    return total / (static_cast<long double>(z.size()) * static_cast<long double>(z.size()));
}

// Exhaustive shared-cap search: smallest integer n in [0, max(sizes)]
// minimizing |budget - sum_j min(n, sizes[j])|.
inline std::size_t shared_cap_exhaustive(const std::vector<std::size_t>& sizes,
                                         std::size_t budget) {
    std::size_t max_s = 0;
    for (std::size_t s : sizes) max_s = std::max(max_s, s);
    std::size_t best_n = 0;
    long long best_err = -1;
    for (std::size_t n = 0; n <= max_s; ++n) {
        long long total = 0;
        for (std::size_t s : sizes) total += static_cast<long long>(std::min(n, s));
        long long err = std::llabs(total - static_cast<long long>(budget));
        if (best_err < 0 || err < best_err) {
            best_err = err;
            best_n = n;
        }
    }
    return best_n;
}

// Exhaustive k-means inertia: sum over points of squared distance to the
// assigned centroid, in long double.
inline long double inertia_ld(const std::vector<float>& points, std::size_t dim,
                              const std::vector<double>& centroids,
                              const std::vector<std::size_t>& assign) {
    long double total = 0.0L;
    std::size_t n = points.size() / dim;
    for (std::size_t i = 0; i < n; ++i) {
        long double d2 = 0.0L;
        for (std::size_t d = 0; d < dim; ++d) {
            long double diff = static_cast<long double>(points[i * dim + d]) -
                               static_cast<long double>(centroids[assign[i] * dim + d]);
            d2 += diff * diff;
        }
        total += d2;
    }
    return total;
}

// Linear projection + row normalization in long double:
// z_i = (x_i W) / ||x_i W||, x row-major rows x din (f32), W row-major
// din x dout (f64).
inline std::vector<std::vector<long double>> project_normalize_ld(
    const std::vector<float>& x, std::size_t rows, std::size_t din,
    const std::vector<double>& w, std::size_t dout) {
    std::vector<std::vector<long double>> z(rows, std::vector<long double>(dout, 0.0L));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < din; ++k) {
            long double xv = x[i * din + k];
            for (std::size_t c = 0; c < dout; ++c)
                z[i][c] += xv * static_cast<long double>(w[k * dout + c]);
        }
        long double n2 = 0.0L;
        for (std::size_t c = 0; c < dout; ++c) n2 += z[i][c] * z[i][c];
        long double n = std::sqrt(n2);
        for (std::size_t c = 0; c < dout; ++c) z[i][c] /= n;
    }
    return z;
}

// scl_loss_ld over long-double rows (same formula as the float overload).
inline SclOracleResult scl_loss_ld(const std::vector<std::vector<long double>>& z,
                                   const std::vector<int>& labels, double tau) {
    std::size_t n = z.size();
    long double total = 0.0L;
    std::size_t included = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pos;
        for (std::size_t p = 0; p < n; ++p)
            if (p != i && labels[p] == labels[i]) pos.push_back(p);
        if (pos.empty()) continue;
        long double denom = 0.0L;
        for (std::size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            long double s = 0.0L;
            for (std::size_t c = 0; c < z[i].size(); ++c) s += z[i][c] * z[a][c];
            denom += std::exp(s / static_cast<long double>(tau));
        }
        long double anchor = 0.0L;
        for (std::size_t p : pos) {
            long double s = 0.0L;
            for (std::size_t c = 0; c < z[i].size(); ++c) s += z[i][c] * z[p][c];
            anchor += std::log(std::exp(s / static_cast<long double>(tau)) / denom);
        }
        total += -anchor / static_cast<long double>(pos.size());
        ++included;
    }
    return {included ? total / static_cast<long double>(included) : 0.0L, included};
}

// itc_loss_ld over long-double z against f32 text rows, with per-sample
// prompt lookup: term (i,j) uses t[pair[j]].
inline long double itc_loss_ld(const std::vector<std::vector<long double>>& z,
                               const std::vector<std::vector<float>>& t,
                               const std::vector<std::size_t>& pair,
                               const std::vector<std::vector<int>>& y) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = 0; j < z.size(); ++j) {
            long double u = 0.0L;
            const std::vector<float>& tj = t[pair[j]];
            for (std::size_t c = 0; c < z[i].size(); ++c)
                u += z[i][c] * static_cast<long double>(tj[c]);
            total += std::log(1.0L + std::exp(-static_cast<long double>(y[i][j]) * u));
        }
    return total / (static_cast<long double>(z.size()) * static_cast<long double>(z.size()));
}

} // namespace oracle
