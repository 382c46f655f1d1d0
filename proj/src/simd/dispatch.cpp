#include "kernels_internal.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "kvr/error.hpp"

namespace kvr::simd {

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const KernelTable& scalar_kernels() { return detail::kScalarTable; }

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(KVR_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(KVR_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& kernels_for(Isa isa) {
    require(isa_supported(isa), ErrorKind::configuration,
            "SIMD ISA not supported on this host: " + std::string(to_string(isa)));
    switch (isa) {
#if defined(KVR_HAVE_AVX2)
        case Isa::avx2: return detail::kAvx2Table;
#endif
#if defined(KVR_HAVE_NEON)
        case Isa::neon: return detail::kNeonTable;
#endif
        default: return detail::kScalarTable;
    }
}

namespace {

Isa best_isa() {
    if (isa_supported(Isa::avx2)) return Isa::avx2;
    if (isa_supported(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

const KernelTable* initial_table() {
    Isa isa = best_isa();
    if (const char* env = std::getenv("KVR_SIMD")) {
        const std::string_view want(env);
        for (Isa cand : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (want == to_string(cand) && isa_supported(cand)) isa = cand;
        }
    }
    return &kernels_for(isa);
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_active_isa(Isa isa) { slot().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace kvr::simd
