#pragma once

#include <cstddef>
#include <string_view>

namespace m3d::simd {

// Instruction-set level used by the dispatched kernels. Scalar is the
// portable reference; every other level must agree with it up to rounding.
enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Best level supported by the running CPU.
Isa detected_isa();

// Level currently used by the dispatched entry points. Defaults to
// detected_isa(), or to the value of M3D_SIMD ("scalar" / "avx2") when set.
Isa active_isa();

// Forces a level for the whole process. Requesting a level the CPU cannot
// run falls back to scalar. Intended for tests and benchmarks.
void set_active_isa(Isa isa);

// Strided matrix view used by gemm: element (r, c) lives at
// data[r * row_stride + c * col_stride], so a transpose is just a swap of
// the two strides.
template <typename T>
struct MatrixRef {
  const T* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;
};

// Per-ISA kernel table. All reductions within one call run in a fixed order
// for a given ISA, so results are reproducible run to run.
template <typename T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*squared_distance)(const T* a, const T* b, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // C[m x n] = alpha * A[m x k] * B[k x n] + beta * C, C row-major with
  // leading dimension ldc. beta == 0 overwrites C without reading it.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, T alpha,
               MatrixRef<T> a, MatrixRef<T> b, T beta, T* c,
               std::size_t ldc);
};

template <typename T>
const KernelTable<T>& kernels_for(Isa isa);

template <typename T>
const KernelTable<T>& kernels() {
  return kernels_for<T>(active_isa());
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  return kernels<T>().dot(a, b, n);
}

template <typename T>
T squared_distance(const T* a, const T* b, std::size_t n) {
  return kernels<T>().squared_distance(a, b, n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  kernels<T>().axpy(alpha, x, y, n);
}

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, T alpha,
          MatrixRef<T> a, MatrixRef<T> b, T beta, T* c, std::size_t ldc) {
  kernels<T>().gemm(m, n, k, alpha, a, b, beta, c, ldc);
}

// Row-major helpers: plain and transposed views of a dense matrix with
// `cols` columns.
template <typename T>
MatrixRef<T> row_major(const T* data, std::size_t cols) {
  return {data, static_cast<std::ptrdiff_t>(cols), 1};
}

template <typename T>
MatrixRef<T> transposed(const T* data, std::size_t cols) {
  return {data, 1, static_cast<std::ptrdiff_t>(cols)};
}

}  // namespace m3d::simd
