#pragma once

#include <cstddef>

// Per-backend entry points wired up by dispatch.cpp.
namespace megacurate::kernels::detail {

struct Vtable {
    double (*dot)(const float*, const float*, std::size_t);
    double (*squared_l2)(const float*, const float*, std::size_t);
    double (*squared_norm)(const float*, std::size_t);
    double (*dot_f64)(const double*, const double*, std::size_t);
    double (*dot_f32f64)(const float*, const double*, std::size_t);
    void (*scale)(const float*, float, float*, std::size_t);
    void (*accumulate)(double*, const float*, std::size_t);
};

extern const Vtable kScalarVtable;

#if defined(__x86_64__) || defined(_M_X64)
extern const Vtable kAvx2Vtable;
bool avx2_available();
#endif

#if defined(__aarch64__)
extern const Vtable kNeonVtable;
#endif

} // namespace megacurate::kernels::detail
