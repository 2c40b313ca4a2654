#include "megacurate/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>

#include "kernels_internal.hpp"
#include "megacurate/common.hpp"

namespace megacurate::kernels {

namespace {

struct State {
    const detail::Vtable* vt = nullptr;
    Backend backend = Backend::Scalar;
};

State g_state;
std::once_flag g_init;

Backend best_backend() {
#if defined(__x86_64__) || defined(_M_X64)
    if (detail::avx2_available()) return Backend::Avx2;
#elif defined(__aarch64__)
    return Backend::Neon;
#endif
    return Backend::Scalar;
}

const detail::Vtable* vtable_for(Backend b) {
    switch (b) {
    case Backend::Scalar:
        return &detail::kScalarVtable;
    case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
        if (detail::avx2_available()) return &detail::kAvx2Vtable;
#endif
        return nullptr;
    case Backend::Neon:
#if defined(__aarch64__)
        return &detail::kNeonVtable;
#else
        return nullptr;
#endif
    }
    return nullptr;
}

Backend parse_backend(const char* name) {
    if (std::strcmp(name, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(name, "avx2") == 0) return Backend::Avx2;
    if (std::strcmp(name, "neon") == 0) return Backend::Neon;
    throw Error(std::string("unknown kernel backend: ") + name);
}

void init_state() {
    Backend b = best_backend();
    if (const char* env = std::getenv("MEGACURATE_KERNELS")) {
        Backend requested = parse_backend(env);
        if (vtable_for(requested) == nullptr)
            throw Error(std::string("MEGACURATE_KERNELS requests unsupported backend: ") + env);
        b = requested;
    }
    g_state.vt = vtable_for(b);
    g_state.backend = b;
}

const State& state() {
    std::call_once(g_init, init_state);
    return g_state;
}

} // namespace

Backend active_backend() { return state().backend; }

const char* backend_name() {
    switch (state().backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
    }
    return "?";
}

bool backend_supported(Backend b) { return vtable_for(b) != nullptr; }

void force_backend(Backend b) {
    state(); // ensure initialized before overwriting
    const detail::Vtable* vt = vtable_for(b);
    if (vt == nullptr) throw Error("kernel backend not supported on this CPU");
    g_state.vt = vt;
    g_state.backend = b;
}

double dot(const float* a, const float* b, std::size_t n) { return state().vt->dot(a, b, n); }

double squared_l2(const float* a, const float* b, std::size_t n) {
    return state().vt->squared_l2(a, b, n);
}

double squared_norm(const float* a, std::size_t n) { return state().vt->squared_norm(a, n); }

double dot_f64(const double* a, const double* b, std::size_t n) {
    return state().vt->dot_f64(a, b, n);
}

double dot_f32f64(const float* a, const double* b, std::size_t n) {
    return state().vt->dot_f32f64(a, b, n);
}

void scale(const float* src, float factor, float* dst, std::size_t n) {
    state().vt->scale(src, factor, dst, n);
}

void accumulate(double* acc, const float* row, std::size_t n) {
    state().vt->accumulate(acc, row, n);
}

void dot_batch(const float* query, const float* rows, std::size_t nrows,
               std::size_t dim, double* out) {
    const detail::Vtable* vt = state().vt;
    for (std::size_t i = 0; i < nrows; ++i)
        out[i] = vt->dot(query, rows + i * dim, dim);
}

} // namespace megacurate::kernels
