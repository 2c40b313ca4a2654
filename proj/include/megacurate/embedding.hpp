#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "megacurate/common.hpp"

namespace megacurate {

// Dense row-major f32 matrix, the common currency of the pipeline.
// Immutable by convention once built; operations return new matrices.
struct EmbeddingMatrix {
    u32 rows = 0;
    u32 dim = 0;
    bool normalized = false;
    std::vector<float> data; // rows * dim, row-major

    EmbeddingMatrix() = default;
    EmbeddingMatrix(u32 rows_, u32 dim_, bool normalized_ = false)
        : rows(rows_), dim(dim_), normalized(normalized_),
          data(static_cast<std::size_t>(rows_) * dim_, 0.0f) {}

    const float* row(std::size_t i) const { return data.data() + i * dim; }
    float* row(std::size_t i) { return data.data() + i * dim; }
    std::span<const float> row_span(std::size_t i) const { return {row(i), dim}; }

    // Checks data length and, if the normalized flag is set, that every
    // row's L2 norm is within 1e-6 of 1. Throws Error on violation.
    void validate() const;
};

// dot(a,b) / (|a||b|); exactly dot(a,b) when both_normalized. Throws on
// dimension mismatch or a zero-norm input. The general path clamps to
// [-1, 1]; the normalized path returns the raw dot.
double cosine_similarity(std::span<const float> a, std::span<const float> b,
                         bool both_normalized = false);

// Returns a unit-norm copy with the normalized flag set. Throws Error
// naming the row index if a zero row is encountered.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

// Embedding sidecar: 16-byte header (magic "MGSE", u32 rows, u32 dim,
// u32 flags, bit0 = normalized), then rows*dim little-endian f32.
void write_mgse(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_mgse(const std::filesystem::path& path);

} // namespace megacurate
