#pragma once

#include "m3d/simd.hpp"

namespace m3d::simd {

template <typename T>
const KernelTable<T>& scalar_kernels();

// Only defined when the build includes the AVX2 translation unit.
template <typename T>
const KernelTable<T>& avx2_kernels();

bool avx2_compiled();

}  // namespace m3d::simd
