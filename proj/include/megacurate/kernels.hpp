#pragma once

#include <cstddef>
#include <string>

// Vector arithmetic kernels behind dedup / clustering / SSCL / retrieval.
// Storage is f32, accumulation is f64 throughout. Each operation has a
// scalar reference implementation plus SIMD variants picked once per
// process by runtime CPU detection; tests pin backends via force_backend
// and check cross-backend agreement against a high-precision oracle.
namespace megacurate::kernels {

enum class Backend { Scalar, Avx2, Neon };

Backend active_backend();
const char* backend_name();
bool backend_supported(Backend b);

// Overrides dispatch (tests, MEGACURATE_KERNELS=scalar|avx2|neon).
// Throws megacurate::Error if the CPU lacks the backend.
void force_backend(Backend b);

double dot(const float* a, const float* b, std::size_t n);
double squared_l2(const float* a, const float* b, std::size_t n);
double squared_norm(const float* a, std::size_t n);
double dot_f64(const double* a, const double* b, std::size_t n);
// Mixed-precision dot: f32 row against an f64 row (f64 accumulation).
double dot_f32f64(const float* a, const double* b, std::size_t n);
// dst = src * factor
void scale(const float* src, float factor, float* dst, std::size_t n);
// acc += row, element-wise (f64 accumulator, f32 row)
void accumulate(double* acc, const float* row, std::size_t n);
// out[i] = dot(query, rows + i*dim) for i in [0, nrows)
void dot_batch(const float* query, const float* rows, std::size_t nrows,
               std::size_t dim, double* out);

} // namespace megacurate::kernels
