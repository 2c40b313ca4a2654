#if defined(__aarch64__)

#include <arm_neon.h>

#include "kernels_internal.hpp"

// NEON is baseline on aarch64, no runtime feature check needed. Same
// precision model as the other backends: widen f32 lanes to f64, then
// accumulate in f64.
namespace megacurate::kernels::detail {

namespace {

inline double hsum_f64(float64x2_t v) { return vaddvq_f64(v); }

double dot_neon(const float* a, const float* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t va = vld1q_f32(a + i);
        float32x4_t vb = vld1q_f32(b + i);
        acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
        acc1 = vfmaq_f64(acc1, vcvt_f64_f32(vget_high_f32(va)), vcvt_f64_f32(vget_high_f32(vb)));
    }
    double out = hsum_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i)
        out += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return out;
}

double squared_l2_neon(const float* a, const float* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t va = vld1q_f32(a + i);
        float32x4_t vb = vld1q_f32(b + i);
        float64x2_t dlo = vsubq_f64(vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
        float64x2_t dhi = vsubq_f64(vcvt_f64_f32(vget_high_f32(va)), vcvt_f64_f32(vget_high_f32(vb)));
        acc0 = vfmaq_f64(acc0, dlo, dlo);
        acc1 = vfmaq_f64(acc1, dhi, dhi);
    }
    double out = hsum_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        out += d * d;
    }
    return out;
}

double squared_norm_neon(const float* a, std::size_t n) { return dot_neon(a, a, n); }

double dot_f64_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double out = hsum_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

double dot_f32f64_neon(const float* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t va = vld1q_f32(a + i);
        acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vcvt_f64_f32(vget_high_f32(va)), vld1q_f64(b + i + 2));
    }
    double out = hsum_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) out += static_cast<double>(a[i]) * b[i];
    return out;
}

void scale_neon(const float* src, float factor, float* dst, std::size_t n) {
    float32x4_t f = vdupq_n_f32(factor);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(dst + i, vmulq_f32(vld1q_f32(src + i), f));
    for (; i < n; ++i) dst[i] = src[i] * factor;
}

void accumulate_neon(double* acc, const float* row, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t v = vld1q_f32(row + i);
        vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), vcvt_f64_f32(vget_low_f32(v))));
        vst1q_f64(acc + i + 2, vaddq_f64(vld1q_f64(acc + i + 2), vcvt_f64_f32(vget_high_f32(v))));
    }
    for (; i < n; ++i) acc[i] += static_cast<double>(row[i]);
}

} // namespace

const Vtable kNeonVtable = {
    dot_neon,     squared_l2_neon, squared_norm_neon, dot_f64_neon,
    dot_f32f64_neon, scale_neon,   accumulate_neon,
};

} // namespace megacurate::kernels::detail

#endif // aarch64
