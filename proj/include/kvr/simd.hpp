#pragma once

// Runtime-dispatched dense kernels. Every routine has a scalar reference in
// kernels_scalar.cpp; vector variants must agree with it to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace kvr::simd {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct KernelTable {
    Isa isa;
    float (*dot_f32)(const float* a, const float* b, std::size_t n);
    // y += a * x
    void (*axpy_f32)(float a, const float* x, float* y, std::size_t n);
    // acc += x, widening to double
    void (*accumulate_f64)(const float* x, double* acc, std::size_t n);
    double (*dot_f64)(const double* a, const double* b, std::size_t n);
    void (*axpy_f64)(double a, const double* x, double* y, std::size_t n);
    // sum (a_i - b_i)^2
    double (*sqdist_f64)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_kernels();
bool isa_supported(Isa isa);
// Throws Error(configuration) if the ISA is not available on this host.
const KernelTable& kernels_for(Isa isa);

// Active table. Defaults to the widest supported ISA; the KVR_SIMD
// environment variable (scalar|avx2|neon) overrides at first use.
const KernelTable& active();
Isa active_isa();
void set_active_isa(Isa isa);

inline float dot(std::span<const float> a, std::span<const float> b) {
    return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot_f64(a.data(), b.data(), a.size());
}
inline void axpy(float a, std::span<const float> x, std::span<float> y) {
    active().axpy_f32(a, x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    active().axpy_f64(a, x.data(), y.data(), x.size());
}
inline void accumulate(std::span<const float> x, std::span<double> acc) {
    active().accumulate_f64(x.data(), acc.data(), x.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return active().sqdist_f64(a.data(), b.data(), a.size());
}

}  // namespace kvr::simd
