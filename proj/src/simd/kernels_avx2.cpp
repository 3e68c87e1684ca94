// AVX2 + FMA kernels. This file is the only one compiled with -mavx2 -mfma;
// nothing here may run unless dispatch has confirmed CPU support.

#include <immintrin.h>

#include <cstddef>

#include "gemm_driver.hpp"
#include "kernels_internal.hpp"

namespace m3d::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

float dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float sqdist_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    const __m256 d1 =
        _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
    acc0 = _mm256_fmadd_ps(d0, d0, acc0);
    acc1 = _mm256_fmadd_ps(d1, d1, acc1);
  }
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc0 = _mm256_fmadd_ps(d, d, acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double sqdist_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 =
        _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 =
        _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d =
        _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// 6 x 16 single-precision tile: 12 accumulators + 2 B loads + 1 broadcast.
struct MicroKernelF32 {
  static constexpr std::size_t MR = 6;
  static constexpr std::size_t NR = 16;

  static void run(std::size_t depth, const float* a, const float* b, float* c,
                  std::size_t ldc, float alpha, float beta, std::size_t mr,
                  std::size_t nr) {
    __m256 acc[MR][2];
    for (auto& row : acc) row[0] = row[1] = _mm256_setzero_ps();
    for (std::size_t p = 0; p < depth; ++p) {
      const __m256 b0 = _mm256_loadu_ps(b);
      const __m256 b1 = _mm256_loadu_ps(b + 8);
      for (std::size_t i = 0; i < MR; ++i) {
        const __m256 ai = _mm256_broadcast_ss(a + i);
        acc[i][0] = _mm256_fmadd_ps(ai, b0, acc[i][0]);
        acc[i][1] = _mm256_fmadd_ps(ai, b1, acc[i][1]);
      }
      a += MR;
      b += NR;
    }
    const __m256 va = _mm256_set1_ps(alpha);
    const __m256 vb = _mm256_set1_ps(beta);
    if (mr == MR && nr == NR) {
      for (std::size_t i = 0; i < MR; ++i) {
        float* row = c + i * ldc;
        for (std::size_t h = 0; h < 2; ++h) {
          __m256 v = _mm256_mul_ps(va, acc[i][h]);
          if (beta != 0.0f)
            v = _mm256_fmadd_ps(vb, _mm256_loadu_ps(row + 8 * h), v);
          _mm256_storeu_ps(row + 8 * h, v);
        }
      }
      return;
    }
    alignas(32) float tile[MR][NR];
    for (std::size_t i = 0; i < MR; ++i) {
      _mm256_store_ps(tile[i], acc[i][0]);
      _mm256_store_ps(tile[i] + 8, acc[i][1]);
    }
    for (std::size_t i = 0; i < mr; ++i) {
      float* row = c + i * ldc;
      for (std::size_t j = 0; j < nr; ++j)
        row[j] = beta == 0.0f ? alpha * tile[i][j]
                              : alpha * tile[i][j] + beta * row[j];
    }
  }
};

// 6 x 8 double-precision tile.
struct MicroKernelF64 {
  static constexpr std::size_t MR = 6;
  static constexpr std::size_t NR = 8;

  static void run(std::size_t depth, const double* a, const double* b,
                  double* c, std::size_t ldc, double alpha, double beta,
                  std::size_t mr, std::size_t nr) {
    __m256d acc[MR][2];
    for (auto& row : acc) row[0] = row[1] = _mm256_setzero_pd();
    for (std::size_t p = 0; p < depth; ++p) {
      const __m256d b0 = _mm256_loadu_pd(b);
      const __m256d b1 = _mm256_loadu_pd(b + 4);
      for (std::size_t i = 0; i < MR; ++i) {
        const __m256d ai = _mm256_broadcast_sd(a + i);
        acc[i][0] = _mm256_fmadd_pd(ai, b0, acc[i][0]);
        acc[i][1] = _mm256_fmadd_pd(ai, b1, acc[i][1]);
      }
      a += MR;
      b += NR;
    }
    const __m256d va = _mm256_set1_pd(alpha);
    const __m256d vb = _mm256_set1_pd(beta);
    if (mr == MR && nr == NR) {
      for (std::size_t i = 0; i < MR; ++i) {
        double* row = c + i * ldc;
        for (std::size_t h = 0; h < 2; ++h) {
          __m256d v = _mm256_mul_pd(va, acc[i][h]);
          if (beta != 0.0)
            v = _mm256_fmadd_pd(vb, _mm256_loadu_pd(row + 4 * h), v);
          _mm256_storeu_pd(row + 4 * h, v);
        }
      }
      return;
    }
    alignas(32) double tile[MR][NR];
    for (std::size_t i = 0; i < MR; ++i) {
      _mm256_store_pd(tile[i], acc[i][0]);
      _mm256_store_pd(tile[i] + 4, acc[i][1]);
    }
    for (std::size_t i = 0; i < mr; ++i) {
      double* row = c + i * ldc;
      for (std::size_t j = 0; j < nr; ++j)
        row[j] = beta == 0.0 ? alpha * tile[i][j]
                             : alpha * tile[i][j] + beta * row[j];
    }
  }
};

void gemm_f32(std::size_t m, std::size_t n, std::size_t k, float alpha,
              MatrixRef<float> a, MatrixRef<float> b, float beta, float* c,
              std::size_t ldc) {
  gemm_blocked<float, MicroKernelF32::MR, MicroKernelF32::NR, MicroKernelF32>(
      m, n, k, alpha, a, b, beta, c, ldc);
}

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, double alpha,
              MatrixRef<double> a, MatrixRef<double> b, double beta, double* c,
              std::size_t ldc) {
  gemm_blocked<double, MicroKernelF64::MR, MicroKernelF64::NR, MicroKernelF64>(
      m, n, k, alpha, a, b, beta, c, ldc);
}

}  // namespace

template <>
const KernelTable<float>& avx2_kernels<float>() {
  static const KernelTable<float> table{dot_f32, sqdist_f32, axpy_f32, gemm_f32};
  return table;
}

template <>
const KernelTable<double>& avx2_kernels<double>() {
  static const KernelTable<double> table{dot_f64, sqdist_f64, axpy_f64,
                                         gemm_f64};
  return table;
}

bool avx2_compiled() { return true; }

}  // namespace m3d::simd
