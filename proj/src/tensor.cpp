#include "m3d/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "m3d/simd.hpp"

namespace m3d {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite())
    throw NumericError(std::string("non-finite values in ") + what);
}

namespace {

template <typename T>
T apply(ElementwiseOp op, T x, T y) {
  switch (op) {
    case ElementwiseOp::add:
      return x + y;
    case ElementwiseOp::sub:
      return x - y;
    case ElementwiseOp::mul:
      return x * y;
    case ElementwiseOp::max0:
      break;
  }
  throw ShapeError("max0 is a unary operation");
}

}  // namespace

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  if (b.rank() == 0 && b.size() == 1) return elementwise(op, a, b[0]);
  if (a.shape() != b.shape())
    throw ShapeError("elementwise shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b[i]);
  require_finite(out, "elementwise result");
  return out;
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, T b) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b);
  require_finite(out, "elementwise result");
  return out;
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a) {
  if (op != ElementwiseOp::max0)
    throw ShapeError("binary elementwise op needs a second operand");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], T(0));
  require_finite(out, "elementwise result");
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects matrices");
  if (a.cols() != b.rows())
    throw ShapeError("matmul inner dimension mismatch " +
                     shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor<T> out({a.rows(), b.cols()});
  simd::gemm<T>(a.rows(), b.cols(), a.cols(), T(1),
                simd::row_major(a.ptr(), a.cols()),
                simd::row_major(b.ptr(), b.cols()), T(0), out.ptr(), b.cols());
  require_finite(out, "matmul result");
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects a matrix");
  Tensor<T> out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

#define M3D_INSTANTIATE(T)                                                   \
  template void require_finite<T>(const Tensor<T>&, const char*);           \
  template Tensor<T> elementwise<T>(ElementwiseOp, const Tensor<T>&,        \
                                    const Tensor<T>&);                      \
  template Tensor<T> elementwise<T>(ElementwiseOp, const Tensor<T>&, T);    \
  template Tensor<T> elementwise<T>(ElementwiseOp, const Tensor<T>&);       \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> transpose<T>(const Tensor<T>&);

M3D_INSTANTIATE(float)
M3D_INSTANTIATE(double)
#undef M3D_INSTANTIATE

}  // namespace m3d
