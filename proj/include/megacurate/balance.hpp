#pragma once

#include <vector>

#include "megacurate/embedding.hpp"

namespace megacurate {

struct KMeansConfig {
    // Cluster counts per tree level, lowest level first.
    std::vector<u32> levels = {50000, 10000, 5000, 1000};
    u32 max_iters = 100;
    double tol = 1e-4; // relative inertia change that counts as converged
    u64 seed = 0;

    // Throws ConfigError unless levels are non-empty, all >= 1, and
    // strictly decreasing from lowest to highest.
    void validate() const;
};

struct KMeansResult {
    u32 k = 0;
    u32 dim = 0;
    std::vector<u32> assignments;     // point -> cluster
    std::vector<double> centroids;    // k * dim, row-major f64 means
    std::vector<double> inertia_trace; // one entry per assignment pass

    EmbeddingMatrix centroids_f32() const;
};

// Lloyd iteration with k-means++ seeding. Assignment distances and all
// accumulations run in f64; the trace is non-increasing and the final
// centroids are the means of the final assignment. Empty clusters are
// repaired by reseeding from the point farthest from its centroid.
KMeansResult lloyd_kmeans(const EmbeddingMatrix& points, u32 k, const KMeansConfig& cfg);

struct ClusterLevel {
    u32 k = 0;
    std::vector<u32> assignments; // lower-level unit -> cluster here
    EmbeddingMatrix centroids;
    std::vector<u64> sizes;  // raw-item mass reachable from each cluster
    std::vector<u32> parent; // cluster -> cluster one level up; empty at the top
};

struct ClusterTree {
    std::vector<ClusterLevel> levels; // [0] lowest ... back() top
    u64 total_items = 0;

    // Structural invariants: lowest-level sizes sum to total_items, every
    // level's sizes equal the aggregation of its children, parents in range.
    void validate() const;
};

// Bottom-up hierarchy: level 0 clusters the raw points, each higher level
// clusters the centroids of the level below. Deterministic given seed.
ClusterTree build_cluster_tree(const EmbeddingMatrix& points, const KMeansConfig& cfg);

// Smallest n >= 0 minimizing |budget - sum_j min(n, sizes[j])|. The
// objective is strictly monotone until n reaches max(sizes), so the
// minimizer is found by bisection over sorted-prefix partial sums.
u64 compute_shared_cap(const std::vector<u64>& sizes, u64 budget);

struct SampleResult {
    std::vector<u64> selected; // raw item indices, ascending
    // selected.size() - M: nonzero only in non-strict mode, where the
    // top-level cap rounds; bounded by the top-level cluster count.
    long long residual = 0;
};

// Top-down balanced draw. The top level allocates min(cap, size) per
// cluster; every level below receives its parent's allocation exactly
// (cap-undershoot plus seeded top-ups); leaves sample uniformly without
// replacement. strict makes the top level exact as well.
SampleResult hierarchical_sample(const ClusterTree& tree, u64 budget, u64 seed,
                                 bool strict = false);

struct BalanceReportRow {
    u32 cluster = 0;     // lowest-level cluster index
    u64 raw = 0;         // cluster size
    u64 selected = 0;    // items drawn from it
    double raw_share = 0.0;
    double selected_share = 0.0;
};

// Per-lowest-cluster accounting of a selection; selected counts sum to
// |selected|.
std::vector<BalanceReportRow> balance_report(const ClusterTree& tree,
                                             const std::vector<u64>& selected);

} // namespace megacurate
