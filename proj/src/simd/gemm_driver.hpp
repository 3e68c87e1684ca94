#pragma once

// Blocked GEMM driver shared by the per-ISA kernel translation units. Each
// TU includes this header and instantiates it with its own micro-kernel; the
// unnamed namespace gives every TU a private copy so code compiled with
// different target flags never merges at link time.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "m3d/simd.hpp"

namespace m3d::simd {
namespace {

inline constexpr std::size_t kBlockK = 256;
inline constexpr std::size_t kBlockN = 2048;

template <typename T>
void scale_c(std::size_t m, std::size_t n, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T(0)) {
      std::fill(row, row + n, T(0));
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

// Packs A[rows x depth] into MR-row slivers laid out depth-major, zero
// padding the last sliver.
template <typename T, std::size_t MR>
void pack_a(std::size_t rows, std::size_t depth, MatrixRef<T> a, T* out) {
  for (std::size_t i0 = 0; i0 < rows; i0 += MR) {
    const std::size_t mr = std::min(MR, rows - i0);
    for (std::size_t p = 0; p < depth; ++p) {
      for (std::size_t i = 0; i < mr; ++i)
        out[i] = a.data[static_cast<std::ptrdiff_t>(i0 + i) * a.row_stride +
                        static_cast<std::ptrdiff_t>(p) * a.col_stride];
      for (std::size_t i = mr; i < MR; ++i) out[i] = T(0);
      out += MR;
    }
  }
}

template <typename T, std::size_t NR>
void pack_b(std::size_t depth, std::size_t cols, MatrixRef<T> b, T* out) {
  for (std::size_t j0 = 0; j0 < cols; j0 += NR) {
    const std::size_t nr = std::min(NR, cols - j0);
    for (std::size_t p = 0; p < depth; ++p) {
      const T* src = b.data + static_cast<std::ptrdiff_t>(p) * b.row_stride;
      for (std::size_t j = 0; j < nr; ++j)
        out[j] = src[static_cast<std::ptrdiff_t>(j0 + j) * b.col_stride];
      for (std::size_t j = nr; j < NR; ++j) out[j] = T(0);
      out += NR;
    }
  }
}

// Micro-kernel contract: accumulate the MR x NR product of one packed A
// sliver and one packed B sliver over `depth`, then write
//   C[0:mr, 0:nr] = alpha * acc + beta * C   (C not read when beta == 0).
template <typename T, std::size_t MR, std::size_t NR, typename MicroKernel>
void gemm_blocked(std::size_t m, std::size_t n, std::size_t k, T alpha,
                  MatrixRef<T> a, MatrixRef<T> b, T beta, T* c,
                  std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0 || alpha == T(0)) {
    scale_c(m, n, beta, c, ldc);
    return;
  }
  constexpr std::size_t kBlockM = MR * 16;
  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;

  for (std::size_t jc = 0; jc < n; jc += kBlockN) {
    const std::size_t nc = std::min(kBlockN, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kBlockK) {
      const std::size_t kc = std::min(kBlockK, k - pc);
      const T beta_here = pc == 0 ? beta : T(1);
      const std::size_t b_panels = (nc + NR - 1) / NR;
      packed_b.resize(b_panels * NR * kc);
      pack_b<T, NR>(kc, nc,
                    {b.data + static_cast<std::ptrdiff_t>(pc) * b.row_stride +
                         static_cast<std::ptrdiff_t>(jc) * b.col_stride,
                     b.row_stride, b.col_stride},
                    packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += kBlockM) {
        const std::size_t mc = std::min(kBlockM, m - ic);
        const std::size_t a_panels = (mc + MR - 1) / MR;
        packed_a.resize(a_panels * MR * kc);
        pack_a<T, MR>(mc, kc,
                      {a.data + static_cast<std::ptrdiff_t>(ic) * a.row_stride +
                           static_cast<std::ptrdiff_t>(pc) * a.col_stride,
                       a.row_stride, a.col_stride},
                      packed_a.data());
        for (std::size_t jr = 0; jr < b_panels; ++jr) {
          const std::size_t nr = std::min(NR, nc - jr * NR);
          for (std::size_t ir = 0; ir < a_panels; ++ir) {
            const std::size_t mr = std::min(MR, mc - ir * MR);
            T* c_tile = c + (ic + ir * MR) * ldc + jc + jr * NR;
            MicroKernel::run(kc, packed_a.data() + ir * MR * kc,
                             packed_b.data() + jr * NR * kc, c_tile, ldc,
                             alpha, beta_here, mr, nr);
          }
        }
      }
    }
  }
}

}  // namespace
}  // namespace m3d::simd
