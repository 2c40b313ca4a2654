#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "megacurate/hash.hpp"
#include "megacurate/parallel.hpp"
#include "megacurate/sscl.hpp"
#include "oracles.hpp"

using namespace megacurate;

namespace {

EmbeddingMatrix gaussian_matrix(u32 rows, u32 dim, Rng& rng, bool normalize) {
    EmbeddingMatrix m(rows, dim);
    for (auto& v : m.data) v = static_cast<float>(rng.next_normal());
    return normalize ? l2_normalize(m) : m;
}

// Raw gaussian images, round-robin labels (every label gets >= 2 rows for
// B >= 2), one unit-norm text row per label.
LabeledBatch random_batch(u64 seed, u32 B, u32 din, u32 dout) {
    Rng rng(seed);
    const u32 n_labels = std::max<u32>(1, B / 3);
    LabeledBatch b;
    b.image_embeddings = gaussian_matrix(B, din, rng, false);
    b.text_embeddings = gaussian_matrix(n_labels, dout, rng, true);
    b.labels.resize(B);
    b.pair_index.resize(B);
    for (u32 i = 0; i < B; ++i) {
        b.labels[i] = i % n_labels;
        b.pair_index[i] = i % n_labels;
    }
    return b;
}

struct OracleEval {
    long double scl;
    std::size_t included;
    long double itc;
};

OracleEval oracle_eval(const LabeledBatch& b, const ProjectionHead& h, double tau,
                       bool instance) {
    auto z = oracle::project_normalize_ld(b.image_embeddings.data, b.image_embeddings.rows,
                                          b.image_embeddings.dim, h.weight, h.dim_out);
    std::vector<int> labels(b.labels.begin(), b.labels.end());
    auto scl = oracle::scl_loss_ld(z, labels, tau);

    std::vector<std::vector<float>> t(b.text_embeddings.rows);
    for (u32 r = 0; r < b.text_embeddings.rows; ++r)
        t[r].assign(b.text_embeddings.row(r), b.text_embeddings.row(r) + b.text_embeddings.dim);
    std::vector<std::size_t> pair(b.pair_index.begin(), b.pair_index.end());
    const std::size_t B = b.labels.size();
    std::vector<std::vector<int>> y(B, std::vector<int>(B));
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j)
            y[i][j] = (instance ? pair[i] == pair[j] : b.labels[i] == b.labels[j]) ? 1 : -1;
    return {scl.loss, scl.included, oracle::itc_loss_ld(z, t, pair, y)};
}

std::vector<double> fd_grad(const LabeledBatch& b, const ProjectionHead& head,
                            const SsclConfig& cfg, double h = 1e-4) {
    ProjectionHead w = head;
    std::vector<double> g(w.weight.size());
    for (std::size_t e = 0; e < w.weight.size(); ++e) {
        const double orig = w.weight[e];
        w.weight[e] = orig + h;
        const double fp = sscl_loss(b, w, cfg);
        w.weight[e] = orig - h;
        const double fm = sscl_loss(b, w, cfg);
        w.weight[e] = orig;
        g[e] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& f) {
    REQUIRE(a.size() == f.size());
    double worst = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) {
        const double denom = std::max({1.0, std::fabs(a[e]), std::fabs(f[e])});
        worst = std::max(worst, std::fabs(a[e] - f[e]) / denom);
    }
    return worst;
}

// Right-multiplies the head by a product of Givens rotations over output
// columns: projected rows rotate rigidly, dot products are preserved.
ProjectionHead rotate_head(const ProjectionHead& h, u64 seed, int spins) {
    ProjectionHead r = h;
    Rng rng = Rng::substream(seed, 0x607aul);
    for (int t = 0; t < spins; ++t) {
        const u32 c1 = static_cast<u32>(rng.next_below(h.dim_out));
        u32 c2 = c1;
        while (c2 == c1) c2 = static_cast<u32>(rng.next_below(h.dim_out));
        const double ang = rng.next_double() * 6.283185307179586;
        const double c = std::cos(ang), s = std::sin(ang);
        for (u32 row = 0; row < h.dim_in; ++row) {
            double& a = r.weight[static_cast<std::size_t>(row) * h.dim_out + c1];
            double& b = r.weight[static_cast<std::size_t>(row) * h.dim_out + c2];
            const double a0 = a, b0 = b;
            a = c * a0 - s * b0;
            b = s * a0 + c * b0;
        }
    }
    return r;
}

// Well-separated style clusters: unit centers plus gaussian jitter, one
// unit text row per style.
LabeledBatch separable_dataset(u32 styles, u32 per_style, u32 din, u32 dtext, double noise,
                               u64 seed) {
    Rng rng(seed);
    EmbeddingMatrix centers = gaussian_matrix(styles, din, rng, true);
    LabeledBatch d;
    d.image_embeddings = EmbeddingMatrix(styles * per_style, din);
    d.text_embeddings = gaussian_matrix(styles, dtext, rng, true);
    d.labels.resize(styles * per_style);
    d.pair_index.resize(styles * per_style);
    for (u32 s = 0; s < styles; ++s)
        for (u32 j = 0; j < per_style; ++j) {
            const u32 i = s * per_style + j;
            float* row = d.image_embeddings.row(i);
            for (u32 c = 0; c < din; ++c)
                row[c] = centers.row(s)[c] +
                         static_cast<float>(noise * rng.next_normal() / std::sqrt(din));
            d.labels[i] = s;
            d.pair_index[i] = s;
        }
    return d;
}

} // namespace

TEST_CASE("sscl: batch and config validation") {
    LabeledBatch b = random_batch(1, 6, 4, 3);
    b.validate();

    LabeledBatch bad = b;
    bad.labels.pop_back();
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = b;
    bad.pair_index[0] = 99;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = b;
    bad.text_embeddings.normalized = false;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = b;
    bad.labels[0] = 7; // row 0 and row n_labels share text row 0 with different labels
    CHECK_THROWS_AS(bad.validate(), Error);

    SsclConfig cfg;
    cfg.validate();
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SsclConfig{};
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SsclConfig{};
    cfg.weight_decay = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SsclConfig{};
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    ProjectionHead h = ProjectionHead::random_init(4, 3, 9);
    h.validate();
    CHECK(h.weight.size() == 12);
    ProjectionHead h2 = ProjectionHead::random_init(4, 3, 9);
    CHECK(h.weight == h2.weight); // seeded
    h.weight[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(h.validate(), Error);

    ProjectionHead round = head_from_matrix(head_to_matrix(ProjectionHead::identity(5)));
    CHECK(round.weight == ProjectionHead::identity(5).weight);
}

TEST_CASE("scl: two same-label samples give exactly zero") {
    LabeledBatch b;
    b.image_embeddings = EmbeddingMatrix(2, 3);
    b.image_embeddings.row(0)[0] = 1.0f;
    b.image_embeddings.row(1)[1] = 1.0f;
    b.text_embeddings = EmbeddingMatrix(1, 3, true);
    b.text_embeddings.row(0)[2] = 1.0f;
    b.labels = {5, 5};
    b.pair_index = {0, 0};

    SclResult r = scl_loss(b, ProjectionHead::identity(3), 0.07);
    CHECK(r.loss == 0.0);
    CHECK(r.per_anchor[0] == 0.0);
    CHECK(r.per_anchor[1] == 0.0);
    CHECK(r.excluded == 0);
}

TEST_CASE("scl: symmetric two-cluster closed form") {
    // Two labels, two rows each, projected rows exactly +e1 / -e1:
    // intra-label cosine 1, inter-label cosine -1. Every anchor's term is
    // log(e^{1/tau} + 2 e^{-1/tau}) - 1/tau.
    const double tau = 0.5;
    LabeledBatch b;
    b.image_embeddings = EmbeddingMatrix(4, 3);
    b.image_embeddings.row(0)[0] = 1.0f;
    b.image_embeddings.row(1)[0] = 1.0f;
    b.image_embeddings.row(2)[0] = -1.0f;
    b.image_embeddings.row(3)[0] = -1.0f;
    b.text_embeddings = EmbeddingMatrix(2, 3, true);
    b.text_embeddings.row(0)[1] = 1.0f;
    b.text_embeddings.row(1)[2] = 1.0f;
    b.labels = {0, 0, 1, 1};
    b.pair_index = {0, 0, 1, 1};

    const double closed =
        std::log(std::exp(1.0 / tau) + 2.0 * std::exp(-1.0 / tau)) - 1.0 / tau;
    SclResult r = scl_loss(b, ProjectionHead::identity(3), tau);
    CHECK(std::fabs(r.loss - closed) <= 1e-12);
    for (u32 i = 0; i < 4; ++i) CHECK(std::fabs(r.per_anchor[i] - closed) <= 1e-12);
}

TEST_CASE("scl: excluded anchors are counted, not scored") {
    LabeledBatch b = random_batch(3, 7, 5, 4);
    b.labels = {0, 0, 1, 1, 2, 0, 1}; // label 2 is a singleton
    b.pair_index = {0, 0, 1, 1, 2, 0, 1};
    b.text_embeddings = [&] {
        Rng rng(77);
        return gaussian_matrix(3, 4, rng, true);
    }();

    SclResult r = scl_loss(b, ProjectionHead::random_init(5, 4, 1), 0.07);
    CHECK(r.excluded == 1);
    CHECK(r.included[4] == 0);
    CHECK(r.per_anchor[4] == 0.0);
    double mean = 0.0;
    u32 n = 0;
    for (u32 i = 0; i < 7; ++i)
        if (r.included[i]) {
            mean += r.per_anchor[i];
            ++n;
        }
    CHECK(n == 6);
    CHECK(r.loss == mean / 6.0);
}

TEST_CASE("itc: pinned scalar values") {
    // Projected rows e1, e2; text rows e3, e4: all dots are exactly 0, so
    // every term sits at the sigmoid midpoint log 2.
    LabeledBatch b;
    b.image_embeddings = EmbeddingMatrix(2, 4);
    b.image_embeddings.row(0)[0] = 1.0f;
    b.image_embeddings.row(1)[1] = 1.0f;
    b.text_embeddings = EmbeddingMatrix(2, 4, true);
    b.text_embeddings.row(0)[2] = 1.0f;
    b.text_embeddings.row(1)[3] = 1.0f;
    b.labels = {0, 1};
    b.pair_index = {0, 1};
    CHECK(std::fabs(itc_loss(b, ProjectionHead::identity(4)) - std::log(2.0)) <= 1e-12);

    // Single positive pair with z.t = 1: log(1 + e^{-1}).
    LabeledBatch one;
    one.image_embeddings = EmbeddingMatrix(1, 4);
    one.image_embeddings.row(0)[0] = 1.0f;
    one.text_embeddings = EmbeddingMatrix(1, 4, true);
    one.text_embeddings.row(0)[0] = 1.0f;
    one.labels = {0};
    one.pair_index = {0};
    CHECK(std::fabs(itc_loss(one, ProjectionHead::identity(4)) - std::log1p(std::exp(-1.0))) <=
          1e-12);
}

TEST_CASE("itc: flipping one pairing sign isolates that term") {
    // Two rows of one style with distinct prompt rows: label-level y is
    // all +1; instance-level flips exactly the (0,1) and (1,0) terms.
    // Each flip changes its term by log(1+e^u) - log(1+e^{-u}) = u.
    LabeledBatch b;
    b.image_embeddings = EmbeddingMatrix(2, 3);
    b.image_embeddings.row(0)[0] = 1.0f;
    b.image_embeddings.row(1)[1] = 1.0f;
    b.text_embeddings = EmbeddingMatrix(2, 3, true);
    b.text_embeddings.row(0)[0] = 1.0f;
    const float r = 0.70710678f;
    b.text_embeddings.row(1)[0] = r;
    b.text_embeddings.row(1)[1] = r;
    b.labels = {4, 4};
    b.pair_index = {0, 1};

    const ProjectionHead id = ProjectionHead::identity(3);
    const double label_level = itc_loss(b, id, false);
    const double instance_level = itc_loss(b, id, true);
    // u01 = z0.t1 = r, u10 = z1.t0 = 0; B^2 = 4.
    CHECK(std::fabs((instance_level - label_level) - (static_cast<double>(r) + 0.0) / 4.0) <=
          1e-12);
}

TEST_CASE("itc: positive and strictly monotone in an aligned pair") {
    for (u64 seed : {11ull, 12ull, 13ull}) {
        LabeledBatch b = random_batch(seed, 9, 6, 5);
        CHECK(itc_loss(b, ProjectionHead::random_init(6, 5, seed)) > 0.0);
    }

    // Single y=+1 pair; raising z.t must strictly lower the loss.
    auto aligned = [](float cosine) {
        LabeledBatch b;
        b.image_embeddings = EmbeddingMatrix(1, 2);
        b.image_embeddings.row(0)[0] = 1.0f;
        b.text_embeddings = EmbeddingMatrix(1, 2, true);
        b.text_embeddings.row(0)[0] = cosine;
        b.text_embeddings.row(0)[1] = std::sqrt(1.0f - cosine * cosine);
        b.labels = {0};
        b.pair_index = {0};
        return itc_loss(b, ProjectionHead::identity(2));
    };
    double prev = aligned(-0.8f);
    for (float c : {-0.3f, 0.1f, 0.5f, 0.9f}) {
        double cur = aligned(c);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("sscl: sum composition and itc weight") {
    LabeledBatch b = random_batch(21, 10, 8, 6);
    ProjectionHead h = ProjectionHead::random_init(8, 6, 3);
    SsclConfig cfg;

    const double scl = scl_loss(b, h, cfg.tau).loss;
    const double itc = itc_loss(b, h);
    CHECK(sscl_loss(b, h, cfg) == scl + itc);

    cfg.itc_weight = 0.25;
    CHECK(sscl_loss(b, h, cfg) == scl + 0.25 * itc);

    // Components (0, log 2) compose to log 2.
    LabeledBatch zero;
    zero.image_embeddings = EmbeddingMatrix(2, 4);
    zero.image_embeddings.row(0)[0] = 1.0f;
    zero.image_embeddings.row(1)[0] = 1.0f;
    zero.text_embeddings = EmbeddingMatrix(1, 4, true);
    zero.text_embeddings.row(0)[2] = 1.0f;
    zero.labels = {0, 0};
    zero.pair_index = {0, 0};
    SsclConfig plain;
    CHECK(std::fabs(sscl_loss(zero, ProjectionHead::identity(4), plain) - std::log(2.0)) <=
          1e-12);
}

TEST_CASE("sscl: losses match the high-precision oracle") {
    // The pinned 4-row, 3-dim fixture first.
    {
        LabeledBatch b = random_batch(40, 4, 3, 3);
        b.labels = {0, 0, 1, 1};
        b.pair_index = {0, 0, 1, 1};
        Rng rng(41);
        b.text_embeddings = gaussian_matrix(2, 3, rng, true);
        const ProjectionHead h = ProjectionHead::identity(3);
        const OracleEval o = oracle_eval(b, h, 0.07, false);
        CHECK(std::fabs(scl_loss(b, h, 0.07).loss - static_cast<double>(o.scl)) <= 1e-9);
        CHECK(std::fabs(itc_loss(b, h) - static_cast<double>(o.itc)) <= 1e-9);
    }

    for (u64 seed = 0; seed < 20; ++seed) {
        Rng dims(seed * 97 + 5);
        const u32 B = 2 + static_cast<u32>(dims.next_below(11));
        const u32 din = 2 + static_cast<u32>(dims.next_below(15));
        const u32 dout = 2 + static_cast<u32>(dims.next_below(11));
        LabeledBatch b = random_batch(seed, B, din, dout);
        ProjectionHead h = ProjectionHead::random_init(din, dout, seed + 1000);
        const bool instance = seed % 3 == 0;

        const OracleEval o = oracle_eval(b, h, 0.07, instance);
        SclResult scl = scl_loss(b, h, 0.07);
        CHECK(std::fabs(scl.loss - static_cast<double>(o.scl)) <= 1e-9);
        CHECK(scl.per_anchor.size() - scl.excluded == o.included);
        CHECK(std::fabs(itc_loss(b, h, instance) - static_cast<double>(o.itc)) <= 1e-9);
    }
}

TEST_CASE("sscl: permutation, rotation, tiling, and thread invariance") {
    LabeledBatch b = random_batch(60, 12, 10, 7);
    ProjectionHead h = ProjectionHead::random_init(10, 7, 8);
    const double scl0 = scl_loss(b, h, 0.07).loss;
    const double itc0 = itc_loss(b, h);

    // Row permutation.
    std::vector<u32> perm(12);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(61);
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_below(i)]);
    LabeledBatch p = b;
    for (u32 i = 0; i < 12; ++i) {
        std::copy(b.image_embeddings.row(perm[i]), b.image_embeddings.row(perm[i]) + 10,
                  p.image_embeddings.row(i));
        p.labels[i] = b.labels[perm[i]];
        p.pair_index[i] = b.pair_index[perm[i]];
    }
    CHECK(std::fabs(scl_loss(p, h, 0.07).loss - scl0) <= 1e-12);
    CHECK(std::fabs(itc_loss(p, h) - itc0) <= 1e-12);

    // Common orthogonal rotation of the projected space.
    ProjectionHead spun = rotate_head(h, 62, 25);
    CHECK(std::fabs(scl_loss(b, spun, 0.07).loss - scl0) <= 1e-9);

    // Tiled similarity blocks.
    for (u32 tile : {1u, 3u, 5u, 12u, 64u}) {
        CHECK(std::fabs(detail::scl_loss_tiled(b, h, 0.07, tile).loss - scl0) <= 1e-10);
        CHECK(std::fabs(detail::itc_loss_tiled(b, h, false, tile) - itc0) <= 1e-10);
    }

    // Thread count must not change a single bit; the batch spans several
    // anchor blocks so the parallel path is actually exercised.
    LabeledBatch big = random_batch(66, 150, 10, 7);
    SsclConfig cfg;
    const double big_scl = scl_loss(big, h, 0.07).loss;
    const double big_itc = itc_loss(big, h);
    const std::vector<double> g0 = sscl_grad(big, h, cfg);
    for (unsigned threads : {1u, 4u}) {
        set_thread_count(threads);
        CHECK(scl_loss(big, h, 0.07).loss == big_scl);
        CHECK(itc_loss(big, h) == big_itc);
        CHECK(sscl_grad(big, h, cfg) == g0);
    }
    set_thread_count(0);
}

TEST_CASE("sscl: analytic gradient matches central differences") {
    // The 8x16 batch with a 16x8 head.
    {
        LabeledBatch b = random_batch(70, 8, 16, 8);
        ProjectionHead h = ProjectionHead::random_init(16, 8, 71);
        SsclConfig cfg;
        CHECK(max_rel_err(sscl_grad(b, h, cfg), fd_grad(b, h, cfg)) <= 1e-5);
    }

    // Zero-similarity symmetric configuration, tighter tolerance.
    {
        LabeledBatch b;
        b.image_embeddings = EmbeddingMatrix(2, 4);
        b.image_embeddings.row(0)[0] = 1.0f;
        b.image_embeddings.row(1)[1] = 1.0f;
        b.text_embeddings = EmbeddingMatrix(2, 4, true);
        b.text_embeddings.row(0)[2] = 1.0f;
        b.text_embeddings.row(1)[3] = 1.0f;
        b.labels = {0, 1};
        b.pair_index = {0, 1};
        ProjectionHead h = ProjectionHead::identity(4);
        SsclConfig cfg;
        CHECK(max_rel_err(sscl_grad(b, h, cfg), fd_grad(b, h, cfg)) <= 1e-6);
    }

    // Loss-zero contrastive configuration still checks out end to end.
    {
        LabeledBatch b;
        b.image_embeddings = EmbeddingMatrix(2, 3);
        b.image_embeddings.row(0)[0] = 1.0f;
        b.image_embeddings.row(1)[1] = 1.0f;
        b.text_embeddings = EmbeddingMatrix(1, 3, true);
        b.text_embeddings.row(0)[2] = 1.0f;
        b.labels = {3, 3};
        b.pair_index = {0, 0};
        ProjectionHead h = ProjectionHead::random_init(3, 3, 5);
        SsclConfig cfg;
        CHECK(max_rel_err(sscl_grad(b, h, cfg), fd_grad(b, h, cfg)) <= 1e-5);
    }

    // Config knobs flow through the gradient.
    {
        LabeledBatch b = random_batch(75, 6, 9, 5);
        ProjectionHead h = ProjectionHead::random_init(9, 5, 76);
        SsclConfig cfg;
        cfg.itc_weight = 0.5;
        cfg.instance_pairing = true;
        cfg.tau = 0.2;
        CHECK(max_rel_err(sscl_grad(b, h, cfg), fd_grad(b, h, cfg)) <= 1e-5);
    }
}

TEST_CASE("train_head: loss decreases on a separable dataset") {
    // Noisy enough that the random init is far from the loss floor.
    LabeledBatch data = separable_dataset(12, 6, 32, 16, 0.8, 80);
    SsclConfig cfg;
    cfg.epochs = 6;
    cfg.lr = 5e-3;
    cfg.batch_size = 24;
    cfg.seed = 81;

    TrainResult r = train_head(data, 16, cfg);
    REQUIRE(r.epoch_mean_loss.size() == 6);
    CHECK(!r.diverged_step.has_value());
    CHECK(r.excluded_anchors == 0); // whole-group batches guarantee positives
    CHECK(r.epoch_mean_loss.back() < r.epoch_mean_loss.front());
    r.head.validate();

    // Composition-independent reading: the trained head beats the init head
    // on the whole dataset treated as one batch.
    ProjectionHead init = ProjectionHead::random_init(32, 16, cfg.seed);
    CHECK(sscl_loss(data, r.head, cfg) < sscl_loss(data, init, cfg));

    // Deterministic: the same config reproduces the same weights.
    TrainResult again = train_head(data, 16, cfg);
    CHECK(again.head.weight == r.head.weight);
    CHECK(again.epoch_mean_loss == r.epoch_mean_loss);

    // The convenience overload is the seeded-random-init special case.
    TrainResult expl =
        train_head(data, ProjectionHead::random_init(32, 16, cfg.seed), cfg);
    CHECK(expl.head.weight == r.head.weight);
}

TEST_CASE("train_head: lr 0 leaves only decay; wd 0 too is bit-identical") {
    LabeledBatch data = separable_dataset(5, 4, 8, 6, 0.3, 90);
    ProjectionHead init = ProjectionHead::random_init(8, 6, 91);

    SsclConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.01;
    cfg.batch_size = 8;
    TrainResult decayed = train_head(data, init, cfg);
    // Batches per epoch: 5 groups of 4 packed 2-per-batch -> 3 batches.
    const double keep = std::pow(1.0 - cfg.weight_decay, 3.0 * 3.0);
    for (std::size_t e = 0; e < init.weight.size(); ++e)
        CHECK(decayed.head.weight[e] == doctest::Approx(init.weight[e] * keep).epsilon(1e-12));

    cfg.weight_decay = 0.0;
    TrainResult frozen = train_head(data, init, cfg);
    CHECK(frozen.head.weight == init.weight);
    CHECK(frozen.epoch_mean_loss.size() == 3);
}

TEST_CASE("train_head: divergence is recorded with its step") {
    LabeledBatch data = separable_dataset(4, 4, 8, 6, 0.3, 95);
    SsclConfig cfg;
    cfg.epochs = 4;
    cfg.lr = 1e300; // first update launches the weights out of range
    cfg.batch_size = 64;

    TrainResult r = train_head(data, 6, cfg);
    REQUIRE(r.diverged_step.has_value());
    CHECK(*r.diverged_step >= 1);
    CHECK(r.epoch_mean_loss.size() < cfg.epochs);
}

TEST_CASE("train_head: input validation") {
    LabeledBatch data = separable_dataset(3, 3, 6, 4, 0.2, 99);
    SsclConfig cfg;
    cfg.epochs = 1;

    LabeledBatch lone = data;
    lone.labels[0] = 77; // that style now has a single sample
    lone.pair_index[0] = 0;
    // Keep text-label consistency: give row 0 its own text row.
    lone.text_embeddings = EmbeddingMatrix(4, 4, true);
    for (u32 rrow = 0; rrow < 4; ++rrow) lone.text_embeddings.row(rrow)[rrow] = 1.0f;
    for (u32 i = 1; i < 9; ++i) lone.pair_index[i] = static_cast<u32>(lone.labels[i]) + 1;
    lone.pair_index[0] = 0;
    CHECK_THROWS_WITH_AS(train_head(lone, 4, cfg), doctest::Contains("fewer than 2"), Error);

    ProjectionHead wrong = ProjectionHead::random_init(5, 4, 1);
    CHECK_THROWS_AS(train_head(data, wrong, cfg), Error);
}
