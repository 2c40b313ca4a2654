#include "megacurate/sscl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "megacurate/hash.hpp"
#include "megacurate/parallel.hpp"

namespace megacurate {

namespace {

constexpr std::size_t kAnchorBlock = 64;

double stable_softplus(double t) {
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

double stable_logistic(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    double e = std::exp(t);
    return e / (1.0 + e);
}

// A borrowed batch: the public ops view a LabeledBatch, the trainer views
// its own gathered row buffers against the shared text matrix.
struct BatchView {
    const float* x = nullptr; // rows x din, raw
    u32 rows = 0;
    u32 din = 0;
    const u64* labels = nullptr;
    const u32* pair = nullptr;
    const EmbeddingMatrix* text = nullptr;
};

BatchView view_of(const LabeledBatch& b) {
    return {b.image_embeddings.data.data(), b.image_embeddings.rows,
            b.image_embeddings.dim,         b.labels.data(),
            b.pair_index.data(),            &b.text_embeddings};
}

// Head-projected, row-normalized embeddings plus the pre-normalization
// norms the chain rule divides by.
struct Projected {
    u32 rows = 0;
    u32 dim = 0;
    std::vector<double> z;    // rows x dim, unit rows
    std::vector<double> norm; // pre-normalization row norms
};

Projected project(const BatchView& b, const ProjectionHead& head) {
    if (b.din != head.dim_in)
        throw Error("projection head expects input dim " + std::to_string(head.dim_in) +
                    ", image embeddings have dim " + std::to_string(b.din));
    Projected out;
    out.rows = b.rows;
    out.dim = head.dim_out;
    out.z.assign(static_cast<std::size_t>(b.rows) * head.dim_out, 0.0);
    out.norm.assign(b.rows, 0.0);
    const u32 din = head.dim_in, dout = head.dim_out;
    parallel_for_blocks(b.rows, kAnchorBlock, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* v = out.z.data() + i * dout;
            const float* xi = b.x + i * din;
            for (u32 k = 0; k < din; ++k) {
                const double xv = xi[k];
                const double* wrow = head.weight.data() + static_cast<std::size_t>(k) * dout;
                for (u32 c = 0; c < dout; ++c) v[c] += xv * wrow[c];
            }
            double n2 = 0.0;
            for (u32 c = 0; c < dout; ++c) n2 += v[c] * v[c];
            if (!std::isfinite(n2) || n2 <= 0.0)
                throw Error("non-finite or zero projection at row " + std::to_string(i));
            const double n = std::sqrt(n2);
            for (u32 c = 0; c < dout; ++c) v[c] /= n;
            out.norm[i] = n;
        }
    });
    return out;
}

// Same-label row lists, keyed for O(1) per-anchor lookup. Map ordering
// keeps everything downstream independent of input row order.
std::map<u64, std::vector<u32>> label_groups(const BatchView& b) {
    std::map<u64, std::vector<u32>> groups;
    for (u32 i = 0; i < b.rows; ++i) groups[b.labels[i]].push_back(i);
    return groups;
}

double dot_zz(const double* a, const double* b, u32 n) {
    double s = 0.0;
    for (u32 c = 0; c < n; ++c) s += a[c] * b[c];
    return s;
}

double dot_zt(const double* a, const float* b, u32 n) {
    double s = 0.0;
    for (u32 c = 0; c < n; ++c) s += a[c] * b[c];
    return s;
}

void check_text(const BatchView& b, const ProjectionHead& head) {
    if (b.text->dim != head.dim_out)
        throw Error("text embeddings have dim " + std::to_string(b.text->dim) +
                    ", projection head emits dim " + std::to_string(head.dim_out));
}

SclResult scl_core(const BatchView& b, const ProjectionHead& head, double tau, u32 tile) {
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    const Projected prj = project(b, head);
    const u32 B = b.rows, dout = prj.dim;
    const auto groups = label_groups(b);

    SclResult r;
    r.per_anchor.assign(B, 0.0);
    r.included.assign(B, 0);

    parallel_for_blocks(B, kAnchorBlock, [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> s(B);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& group = groups.at(b.labels[i]);
            if (group.size() < 2) continue; // no positive: excluded
            const double* zi = prj.z.data() + i * dout;
            for (u32 a = 0; a < B; ++a)
                s[a] = dot_zz(zi, prj.z.data() + static_cast<std::size_t>(a) * dout, dout) / tau;

            const u32 width = tile == 0 ? B : tile;
            double m = -std::numeric_limits<double>::infinity();
            for (u32 start = 0; start < B; start += width) {
                const u32 stop = std::min(B, start + width);
                for (u32 a = start; a < stop; ++a)
                    if (a != i) m = std::max(m, s[a]);
            }
            double denom = 0.0;
            for (u32 start = 0; start < B; start += width) {
                const u32 stop = std::min(B, start + width);
                double part = 0.0;
                for (u32 a = start; a < stop; ++a)
                    if (a != i) part += std::exp(s[a] - m);
                denom += part;
            }
            const double lse = m + std::log(denom);

            double pos_sum = 0.0;
            for (u32 p : group)
                if (p != i) pos_sum += s[p];
            const double pos_mean = pos_sum / static_cast<double>(group.size() - 1);

            r.per_anchor[i] = lse - pos_mean;
            r.included[i] = 1;
        }
    });

    double total = 0.0;
    u32 inc = 0;
    for (u32 i = 0; i < B; ++i)
        if (r.included[i]) {
            total += r.per_anchor[i];
            ++inc;
        }
    r.loss = inc > 0 ? total / static_cast<double>(inc) : 0.0;
    r.excluded = B - inc;
    if (!std::isfinite(r.loss)) throw Error("non-finite contrastive loss");
    return r;
}

double itc_core(const BatchView& b, const ProjectionHead& head, bool instance_pairing,
                u32 tile) {
    check_text(b, head);
    if (b.rows == 0) return 0.0;
    const Projected prj = project(b, head);
    const u32 B = b.rows, dout = prj.dim;

    std::vector<double> row_sum(B, 0.0);
    parallel_for_blocks(B, kAnchorBlock, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* zi = prj.z.data() + i * dout;
            const u32 width = tile == 0 ? B : tile;
            double sum = 0.0;
            for (u32 start = 0; start < B; start += width) {
                const u32 stop = std::min(B, start + width);
                double part = 0.0;
                for (u32 j = start; j < stop; ++j) {
                    const bool positive = instance_pairing ? b.pair[i] == b.pair[j]
                                                           : b.labels[i] == b.labels[j];
                    const double y = positive ? 1.0 : -1.0;
                    const double u = dot_zt(zi, b.text->row(b.pair[j]), dout);
                    part += stable_softplus(-y * u);
                }
                sum += part;
            }
            row_sum[i] = sum;
        }
    });

    double total = 0.0;
    for (u32 i = 0; i < B; ++i) total += row_sum[i];
    const double loss = total / (static_cast<double>(B) * static_cast<double>(B));
    if (!std::isfinite(loss)) throw Error("non-finite image-text loss");
    return loss;
}

// Analytic gradient of scl + itc_weight * itc with respect to the head
// weights. Flow: G holds dL/ds over pairwise similarities, gZ collects
// dL/dz, the normalization chain turns that into dL/d(pre-norm rows), and
// x^T folds it back onto the weight matrix.
std::vector<double> grad_core(const BatchView& b, const ProjectionHead& head,
                              const SsclConfig& cfg) {
    check_text(b, head);
    const Projected prj = project(b, head);
    const u32 B = b.rows, din = head.dim_in, dout = head.dim_out;
    const double tau = cfg.tau;
    const auto groups = label_groups(b);

    u32 n_included = 0;
    for (u32 i = 0; i < B; ++i)
        if (groups.at(b.labels[i]).size() >= 2) ++n_included;

    std::vector<double> G(static_cast<std::size_t>(B) * B, 0.0);
    if (n_included > 0) {
        parallel_for_blocks(B, kAnchorBlock, [&](std::size_t, std::size_t lo, std::size_t hi) {
            std::vector<double> s(B);
            for (std::size_t i = lo; i < hi; ++i) {
                const auto& group = groups.at(b.labels[i]);
                if (group.size() < 2) continue;
                const double* zi = prj.z.data() + i * dout;
                for (u32 a = 0; a < B; ++a)
                    s[a] = dot_zz(zi, prj.z.data() + static_cast<std::size_t>(a) * dout, dout) /
                           tau;
                double m = -std::numeric_limits<double>::infinity();
                for (u32 a = 0; a < B; ++a)
                    if (a != i) m = std::max(m, s[a]);
                double denom = 0.0;
                for (u32 a = 0; a < B; ++a)
                    if (a != i) denom += std::exp(s[a] - m);
                const double inv_pos = 1.0 / static_cast<double>(group.size() - 1);
                double* grow = G.data() + i * static_cast<std::size_t>(B);
                for (u32 a = 0; a < B; ++a)
                    if (a != i) grow[a] = std::exp(s[a] - m) / denom; // softmax over A(i)
                for (u32 p : group)
                    if (p != i) grow[p] -= inv_pos;
                for (u32 a = 0; a < B; ++a) grow[a] /= static_cast<double>(n_included);
            }
        });
    }

    // dL/dz rows: contrastive part (1/tau)(G + G^T) z, plus the sigmoid
    // image-text part against the per-sample prompt rows.
    const double itc_scale =
        cfg.itc_weight / (static_cast<double>(B) * static_cast<double>(B));
    std::vector<double> gZ(static_cast<std::size_t>(B) * dout, 0.0);
    parallel_for_blocks(B, kAnchorBlock, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* gi = gZ.data() + i * dout;
            const double* zi = prj.z.data() + i * dout;
            for (u32 a = 0; a < B; ++a) {
                const double coef =
                    (G[i * static_cast<std::size_t>(B) + a] +
                     G[static_cast<std::size_t>(a) * B + i]) /
                    tau;
                if (coef == 0.0) continue;
                const double* za = prj.z.data() + static_cast<std::size_t>(a) * dout;
                for (u32 c = 0; c < dout; ++c) gi[c] += coef * za[c];
            }
            if (itc_scale != 0.0) {
                for (u32 j = 0; j < B; ++j) {
                    const bool positive = cfg.instance_pairing ? b.pair[i] == b.pair[j]
                                                               : b.labels[i] == b.labels[j];
                    const double y = positive ? 1.0 : -1.0;
                    const float* tj = b.text->row(b.pair[j]);
                    const double u = dot_zt(zi, tj, dout);
                    const double h = itc_scale * (-y) * stable_logistic(-y * u);
                    for (u32 c = 0; c < dout; ++c) gi[c] += h * tj[c];
                }
            }
        }
    });

    // Chain through row normalization: dv = (g - (g.z) z) / |v|.
    parallel_for_blocks(B, kAnchorBlock, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            double* gi = gZ.data() + i * dout;
            const double* zi = prj.z.data() + i * dout;
            const double gz = dot_zz(gi, zi, dout);
            const double inv_n = 1.0 / prj.norm[i];
            for (u32 c = 0; c < dout; ++c) gi[c] = (gi[c] - gz * zi[c]) * inv_n;
        }
    });

    // dW = x^T dv, reduced block-by-block in fixed order.
    const std::size_t nblocks = block_count(B, kAnchorBlock);
    std::vector<std::vector<double>> partial(
        nblocks, std::vector<double>(static_cast<std::size_t>(din) * dout, 0.0));
    parallel_for_blocks(B, kAnchorBlock,
                        [&](std::size_t blk, std::size_t lo, std::size_t hi) {
                            std::vector<double>& part = partial[blk];
                            for (std::size_t i = lo; i < hi; ++i) {
                                const float* xi = b.x + i * din;
                                const double* gi = gZ.data() + i * dout;
                                for (u32 k = 0; k < din; ++k) {
                                    const double xv = xi[k];
                                    if (xv == 0.0) continue;
                                    double* wrow =
                                        part.data() + static_cast<std::size_t>(k) * dout;
                                    for (u32 c = 0; c < dout; ++c) wrow[c] += xv * gi[c];
                                }
                            }
                        });

    std::vector<double> grad(static_cast<std::size_t>(din) * dout, 0.0);
    for (std::size_t blk = 0; blk < nblocks; ++blk)
        for (std::size_t e = 0; e < grad.size(); ++e) grad[e] += partial[blk][e];
    for (double g : grad)
        if (!std::isfinite(g)) throw Error("non-finite gradient");
    return grad;
}

} // namespace

void LabeledBatch::validate() const {
    image_embeddings.validate();
    text_embeddings.validate();
    if (!text_embeddings.normalized)
        throw Error("text embeddings must be unit-norm (normalized flag unset)");
    const std::size_t rows = image_embeddings.rows;
    if (labels.size() != rows)
        throw Error("label count " + std::to_string(labels.size()) + " != image rows " +
                    std::to_string(rows));
    if (pair_index.size() != rows)
        throw Error("pair index count " + std::to_string(pair_index.size()) +
                    " != image rows " + std::to_string(rows));
    std::map<u32, u64> text_label;
    for (std::size_t i = 0; i < rows; ++i) {
        if (pair_index[i] >= text_embeddings.rows)
            throw Error("pair index " + std::to_string(pair_index[i]) + " at row " +
                        std::to_string(i) + " exceeds text rows " +
                        std::to_string(text_embeddings.rows));
        auto [it, fresh] = text_label.emplace(pair_index[i], labels[i]);
        if (!fresh && it->second != labels[i])
            throw Error("text row " + std::to_string(pair_index[i]) +
                        " is paired with two different labels");
    }
}

ProjectionHead ProjectionHead::identity(u32 dim) {
    ProjectionHead h;
    h.dim_in = h.dim_out = dim;
    h.weight.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (u32 i = 0; i < dim; ++i) h.weight[static_cast<std::size_t>(i) * dim + i] = 1.0;
    return h;
}

ProjectionHead ProjectionHead::random_init(u32 dim_in, u32 dim_out, u64 seed) {
    if (dim_in == 0 || dim_out == 0) throw Error("projection head dims must be positive");
    ProjectionHead h;
    h.dim_in = dim_in;
    h.dim_out = dim_out;
    h.weight.resize(static_cast<std::size_t>(dim_in) * dim_out);
    Rng rng = Rng::substream(seed, 0x4ead11u);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_in));
    for (double& w : h.weight) w = rng.next_normal() * scale;
    return h;
}

void ProjectionHead::validate() const {
    if (dim_in == 0 || dim_out == 0) throw Error("projection head dims must be positive");
    if (weight.size() != static_cast<std::size_t>(dim_in) * dim_out)
        throw Error("projection head weight size " + std::to_string(weight.size()) +
                    " != " + std::to_string(dim_in) + "x" + std::to_string(dim_out));
    for (double w : weight)
        if (!std::isfinite(w)) throw Error("projection head has non-finite weights");
}

EmbeddingMatrix head_to_matrix(const ProjectionHead& head) {
    head.validate();
    EmbeddingMatrix m(head.dim_in, head.dim_out);
    for (std::size_t e = 0; e < head.weight.size(); ++e)
        m.data[e] = static_cast<float>(head.weight[e]);
    return m;
}

ProjectionHead head_from_matrix(const EmbeddingMatrix& m) {
    m.validate();
    if (m.rows == 0 || m.dim == 0) throw Error("projection head matrix is empty");
    ProjectionHead h;
    h.dim_in = m.rows;
    h.dim_out = m.dim;
    h.weight.assign(m.data.begin(), m.data.end());
    h.validate();
    return h;
}

void SsclConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
    if (!(weight_decay >= 0.0 && weight_decay < 1.0))
        throw ConfigError("weight_decay must be in [0, 1)");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(itc_weight >= 0.0)) throw ConfigError("itc_weight must be non-negative");
}

SclResult scl_loss(const LabeledBatch& batch, const ProjectionHead& head, double tau) {
    batch.validate();
    head.validate();
    return scl_core(view_of(batch), head, tau, 0);
}

double itc_loss(const LabeledBatch& batch, const ProjectionHead& head, bool instance_pairing) {
    batch.validate();
    head.validate();
    return itc_core(view_of(batch), head, instance_pairing, 0);
}

double sscl_loss(const LabeledBatch& batch, const ProjectionHead& head, const SsclConfig& cfg) {
    batch.validate();
    head.validate();
    cfg.validate();
    const BatchView v = view_of(batch);
    return scl_core(v, head, cfg.tau, 0).loss +
           cfg.itc_weight * itc_core(v, head, cfg.instance_pairing, 0);
}

std::vector<double> sscl_grad(const LabeledBatch& batch, const ProjectionHead& head,
                              const SsclConfig& cfg) {
    batch.validate();
    head.validate();
    cfg.validate();
    return grad_core(view_of(batch), head, cfg);
}

namespace detail {

SclResult scl_loss_tiled(const LabeledBatch& batch, const ProjectionHead& head, double tau,
                         u32 tile) {
    batch.validate();
    head.validate();
    return scl_core(view_of(batch), head, tau, tile);
}

double itc_loss_tiled(const LabeledBatch& batch, const ProjectionHead& head,
                      bool instance_pairing, u32 tile) {
    batch.validate();
    head.validate();
    return itc_core(view_of(batch), head, instance_pairing, tile);
}

} // namespace detail

TrainResult train_head(const LabeledBatch& dataset, const ProjectionHead& init,
                       const SsclConfig& cfg) {
    dataset.validate();
    init.validate();
    cfg.validate();
    if (dataset.image_embeddings.dim != init.dim_in)
        throw Error("initial head input dim " + std::to_string(init.dim_in) +
                    " != embedding dim " + std::to_string(dataset.image_embeddings.dim));
    check_text(view_of(dataset), init);
    if (dataset.image_embeddings.rows < 2)
        throw Error("training needs at least 2 samples");

    std::map<u64, std::vector<u32>> groups;
    for (u32 i = 0; i < dataset.image_embeddings.rows; ++i)
        groups[dataset.labels[i]].push_back(i);
    for (const auto& [label, rows] : groups)
        if (rows.size() < 2)
            throw Error("style label " + std::to_string(label) +
                        " has fewer than 2 samples");
    std::vector<const std::vector<u32>*> group_rows;
    group_rows.reserve(groups.size());
    for (const auto& [label, rows] : groups) group_rows.push_back(&rows);

    TrainResult result;
    result.head = init;
    const u32 din = init.dim_in;

    u64 step = 0;
    std::vector<float> bx;
    std::vector<u64> blabels;
    std::vector<u32> bpair;
    for (u32 epoch = 0; epoch < cfg.epochs && !result.diverged_step; ++epoch) {
        std::vector<u32> order(group_rows.size());
        std::iota(order.begin(), order.end(), 0u);
        Rng rng = Rng::substream(cfg.seed, hash_combine(0x3ba7c4e5u, epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);

        // Whole style groups per batch so every anchor has a positive; a
        // group larger than batch_size becomes its own oversized batch.
        std::vector<std::vector<u32>> batches;
        std::vector<u32> current;
        for (u32 g : order) {
            const auto& rows = *group_rows[g];
            if (!current.empty() && current.size() + rows.size() > cfg.batch_size) {
                batches.push_back(std::move(current));
                current.clear();
            }
            current.insert(current.end(), rows.begin(), rows.end());
        }
        if (!current.empty()) batches.push_back(std::move(current));

        double epoch_sum = 0.0;
        u32 epoch_batches = 0;
        for (const auto& rows : batches) {
            const u32 bs = static_cast<u32>(rows.size());
            bx.assign(static_cast<std::size_t>(bs) * din, 0.0f);
            blabels.resize(bs);
            bpair.resize(bs);
            for (u32 r = 0; r < bs; ++r) {
                const float* src = dataset.image_embeddings.row(rows[r]);
                std::copy(src, src + din, bx.begin() + static_cast<std::size_t>(r) * din);
                blabels[r] = dataset.labels[rows[r]];
                bpair[r] = dataset.pair_index[rows[r]];
            }
            BatchView bv{bx.data(), bs,          din, blabels.data(), bpair.data(),
                         &dataset.text_embeddings};

            // Any non-finite value (overflowing projection, NaN loss or
            // gradient) counts as divergence: record the step and stop
            // without applying the update.
            double loss;
            std::vector<double> grad;
            try {
                SclResult scl = scl_core(bv, result.head, cfg.tau, 0);
                result.excluded_anchors += scl.excluded;
                loss = scl.loss +
                       cfg.itc_weight * itc_core(bv, result.head, cfg.instance_pairing, 0);
                if (!std::isfinite(loss)) throw Error("non-finite loss");
                if (cfg.lr != 0.0) grad = grad_core(bv, result.head, cfg);
            } catch (const Error&) {
                result.diverged_step = step;
                break;
            }
            epoch_sum += loss;
            ++epoch_batches;

            // W <- (1 - wd) W - lr * grad(W), gradient taken pre-decay.
            if (cfg.weight_decay != 0.0) {
                const double keep = 1.0 - cfg.weight_decay;
                for (double& w : result.head.weight) w *= keep;
            }
            if (cfg.lr != 0.0)
                for (std::size_t e = 0; e < grad.size(); ++e)
                    result.head.weight[e] -= cfg.lr * grad[e];
            ++step;
        }
        if (epoch_batches > 0)
            result.epoch_mean_loss.push_back(epoch_sum / static_cast<double>(epoch_batches));
    }
    return result;
}

TrainResult train_head(const LabeledBatch& dataset, u32 dim_out, const SsclConfig& cfg) {
    return train_head(dataset,
                      ProjectionHead::random_init(dataset.image_embeddings.dim, dim_out,
                                                  cfg.seed),
                      cfg);
}

} // namespace megacurate
