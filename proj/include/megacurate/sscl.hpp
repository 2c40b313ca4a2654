#pragma once

#include <optional>
#include <vector>

#include "megacurate/common.hpp"
#include "megacurate/embedding.hpp"

namespace megacurate {

// One training batch (or a whole desk-scale dataset): raw image
// embeddings, the unit-norm prompt embeddings they pair with, a style
// label per image row, and for each image row the prompt row that is its
// correct caption. Text rows may be shared by many image rows; all image
// rows pointing at one text row must carry the same label.
struct LabeledBatch {
    EmbeddingMatrix image_embeddings; // raw, one row per sample
    EmbeddingMatrix text_embeddings;  // unit-norm prompt embeddings
    std::vector<u64> labels;          // style label per image row
    std::vector<u32> pair_index;      // image row -> its prompt row

    void validate() const;
};

// Linear stand-in for the trainable image tower: projects raw inputs to
// the text-embedding space. Weights are kept in f64 so optimizer steps
// and derivative checks are not quantization-limited; on disk the head
// travels as an f32 matrix like every other embedding artifact.
struct ProjectionHead {
    u32 dim_in = 0;
    u32 dim_out = 0;
    std::vector<double> weight; // row-major dim_in x dim_out

    static ProjectionHead identity(u32 dim);
    static ProjectionHead random_init(u32 dim_in, u32 dim_out, u64 seed);

    void validate() const; // shape and finiteness
};

EmbeddingMatrix head_to_matrix(const ProjectionHead& head);
ProjectionHead head_from_matrix(const EmbeddingMatrix& m);

struct SsclConfig {
    double tau = 0.07;
    double lr = 5e-4;
    double weight_decay = 0.01;
    u32 epochs = 30;
    u32 batch_size = 256;
    // The image-text term is normalized per batch (1/B^2); this scales it
    // against the contrastive term. 1 keeps the plain sum.
    double itc_weight = 1.0;
    // false: a text row is positive for every image of its style.
    // true: only the image's own prompt row is positive.
    bool instance_pairing = false;
    u64 seed = 0;

    void validate() const; // tau > 0, lr >= 0, weight_decay in [0,1), ...
};

struct SclResult {
    double loss = 0.0;                    // mean over included anchors
    std::vector<double> per_anchor;       // term per row; 0 when excluded
    std::vector<unsigned char> included;  // 1 iff the row had a positive
    u32 excluded = 0;                     // rows with no same-label peer
};

// Supervised contrastive loss over head-projected, unit-normalized rows:
// mean over anchors of -(1/|P(i)|) sum_{p in P(i)} log softmax_i(p),
// where the softmax runs over all rows but the anchor. Anchors without a
// positive are excluded and counted. Throws Error on a non-finite or
// zero-norm projection.
SclResult scl_loss(const LabeledBatch& batch, const ProjectionHead& head, double tau);

// Sigmoid image-text loss: (1/B^2) sum_ij log(1 + exp(-y_ij z_i.t_j))
// with t_j the prompt row of sample j and y_ij = +1 iff sample i's style
// matches it (or, under instance pairing, iff both samples share the
// exact prompt row).
double itc_loss(const LabeledBatch& batch, const ProjectionHead& head,
                bool instance_pairing = false);

// scl + itc_weight * itc.
double sscl_loss(const LabeledBatch& batch, const ProjectionHead& head,
                 const SsclConfig& cfg);

// Analytic d(sscl_loss)/d(weight), row-major dim_in x dim_out.
std::vector<double> sscl_grad(const LabeledBatch& batch, const ProjectionHead& head,
                              const SsclConfig& cfg);

struct TrainResult {
    ProjectionHead head;
    std::vector<double> epoch_mean_loss;
    u64 excluded_anchors = 0;          // summed over every batch
    std::optional<u64> diverged_step;  // batch step whose loss went non-finite
};

// Mini-batch SGD with decoupled weight decay: per step, W <- (1-wd)*W,
// then W <- W - lr*grad. Batches pack whole style groups so every anchor
// has a positive; group order reshuffles per epoch from cfg.seed. Fully
// deterministic for a fixed config. A non-finite batch loss aborts
// training with the step recorded; the update for that step is skipped.
// Requires at least two samples per style label.
TrainResult train_head(const LabeledBatch& dataset, const ProjectionHead& init,
                       const SsclConfig& cfg);
// Same, starting from a seeded random head (cfg.seed).
TrainResult train_head(const LabeledBatch& dataset, u32 dim_out, const SsclConfig& cfg);

namespace detail {

// Loss entry points with the similarity row evaluated in fixed column
// tiles (0 = one pass). Tiling only reassociates sums; the public
// functions use one pass, and equivalence across tile widths is a
// contract the tests pin.
SclResult scl_loss_tiled(const LabeledBatch& batch, const ProjectionHead& head,
                         double tau, u32 tile);
double itc_loss_tiled(const LabeledBatch& batch, const ProjectionHead& head,
                      bool instance_pairing, u32 tile);

} // namespace detail

} // namespace megacurate
