#include "kernels_internal.hpp"

// Reference kernels. Plain f64 accumulation in index order; the SIMD
// variants may reassociate the sum but must stay within the equivalence
// tolerances checked in tests/test_kernels.cpp.
namespace megacurate::kernels::detail {

namespace {

double dot_scalar(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

double squared_l2_scalar(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

double squared_norm_scalar(const float* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    return acc;
}

double dot_f64_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double dot_f32f64_scalar(const float* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

void scale_scalar(const float* src, float factor, float* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] * factor;
}

void accumulate_scalar(double* acc, const float* row, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(row[i]);
}

} // namespace

const Vtable kScalarVtable = {
    dot_scalar,     squared_l2_scalar, squared_norm_scalar, dot_f64_scalar,
    dot_f32f64_scalar, scale_scalar,   accumulate_scalar,
};

} // namespace megacurate::kernels::detail
