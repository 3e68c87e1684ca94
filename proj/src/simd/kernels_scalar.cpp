// Portable reference kernels. Compiled with baseline flags only.

#include <cstddef>

#include "gemm_driver.hpp"
#include "kernels_internal.hpp"

namespace m3d::simd {
namespace {

template <typename T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T squared_distance_scalar(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

template <typename T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T, std::size_t MR, std::size_t NR>
struct ScalarMicroKernel {
  static void run(std::size_t depth, const T* a, const T* b, T* c,
                  std::size_t ldc, T alpha, T beta, std::size_t mr,
                  std::size_t nr) {
    T acc[MR][NR] = {};
    for (std::size_t p = 0; p < depth; ++p) {
      const T* ap = a + p * MR;
      const T* bp = b + p * NR;
      for (std::size_t i = 0; i < MR; ++i)
        for (std::size_t j = 0; j < NR; ++j) acc[i][j] += ap[i] * bp[j];
    }
    for (std::size_t i = 0; i < mr; ++i) {
      T* row = c + i * ldc;
      if (beta == T(0)) {
        for (std::size_t j = 0; j < nr; ++j) row[j] = alpha * acc[i][j];
      } else {
        for (std::size_t j = 0; j < nr; ++j)
          row[j] = alpha * acc[i][j] + beta * row[j];
      }
    }
  }
};

template <typename T>
void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, T alpha,
                 MatrixRef<T> a, MatrixRef<T> b, T beta, T* c,
                 std::size_t ldc) {
  gemm_blocked<T, 4, 8, ScalarMicroKernel<T, 4, 8>>(m, n, k, alpha, a, b,
                                                    beta, c, ldc);
}

}  // namespace

template <>
const KernelTable<float>& scalar_kernels<float>() {
  static const KernelTable<float> table{dot_scalar<float>,
                                        squared_distance_scalar<float>,
                                        axpy_scalar<float>, gemm_scalar<float>};
  return table;
}

template <>
const KernelTable<double>& scalar_kernels<double>() {
  static const KernelTable<double> table{
      dot_scalar<double>, squared_distance_scalar<double>, axpy_scalar<double>,
      gemm_scalar<double>};
  return table;
}

}  // namespace m3d::simd
