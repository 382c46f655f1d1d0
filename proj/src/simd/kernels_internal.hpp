#pragma once

#include "kvr/simd.hpp"

namespace kvr::simd::detail {

extern const KernelTable kScalarTable;

#if defined(KVR_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

#if defined(KVR_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif

}  // namespace kvr::simd::detail
