#include "m3d/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "m3d/simd.hpp"

namespace m3d {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::gaussian:
      return "gaussian";
    case KernelFamily::linear:
      return "linear";
    case KernelFamily::polynomial:
      return "polynomial";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "linear") return KernelFamily::linear;
  if (name == "polynomial") return KernelFamily::polynomial;
  throw ConfigError("unknown kernel family '" + name + "'");
}

void KernelSpec::validate() const {
  switch (family) {
    case KernelFamily::gaussian:
      if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ConfigError("gaussian kernel needs lambda > 0");
      break;
    case KernelFamily::polynomial:
      if (degree < 1) throw ConfigError("polynomial kernel needs degree >= 1");
      if (!(c >= 0.0)) throw ConfigError("polynomial kernel needs c >= 0");
      break;
    case KernelFamily::linear:
      break;
  }
}

std::string KernelSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(family);
  if (family == KernelFamily::gaussian) os << "(lambda=" << lambda << ")";
  if (family == KernelFamily::polynomial)
    os << "(c=" << c << ",d=" << degree << ")";
  return os.str();
}

template <typename T>
double GramMatrix<T>::mean() const {
  if (values_.size() == 0) throw ShapeError("mean of an empty Gram matrix");
  double total = 0.0;
  for (std::size_t i = 0; i < rows(); ++i) {
    double row_sum = 0.0;
    const T* row = values_.ptr() + i * cols();
    for (std::size_t j = 0; j < cols(); ++j) row_sum += row[j];
    total += row_sum;
  }
  return total / static_cast<double>(values_.size());
}

template <typename T>
double GramMatrix<T>::off_diagonal_mean() const {
  const std::size_t n = rows();
  if (n != cols() || n < 2)
    throw ShapeError("off-diagonal mean needs a square matrix with n >= 2");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    const T* row = values_.ptr() + i * n;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row_sum += row[j];
    total += row_sum;
  }
  return total / static_cast<double>(n * (n - 1));
}

namespace {

template <typename T>
T int_power(T base, int exponent) {
  T result = 1;
  for (int i = 0; i < exponent; ++i) result *= base;
  return result;
}

template <typename T>
T kernel_value(const KernelSpec& spec, const T* a, const T* b, std::size_t p) {
  switch (spec.family) {
    case KernelFamily::gaussian:
      return std::exp(-static_cast<T>(spec.lambda) *
                      simd::squared_distance(a, b, p));
    case KernelFamily::linear:
      return simd::dot(a, b, p);
    case KernelFamily::polynomial:
      return int_power(simd::dot(a, b, p) + static_cast<T>(spec.c), spec.degree);
  }
  return T(0);
}

void check_same_length(std::size_t a, std::size_t b) {
  if (a != b)
    throw ShapeError("kernel arguments differ in length: " + std::to_string(a) +
                     " vs " + std::to_string(b));
}

}  // namespace

template <typename T>
double kernel_eval(const KernelSpec& spec, std::span<const T> a,
                   std::span<const T> b) {
  spec.validate();
  check_same_length(a.size(), b.size());
  return static_cast<double>(kernel_value(spec, a.data(), b.data(), a.size()));
}

template <typename T>
GramMatrix<T> gram(const KernelSpec& spec, const Tensor<T>& a,
                   const Tensor<T>& b) {
  spec.validate();
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("gram expects two matrices");
  if (a.cols() != b.cols())
    throw ShapeError("gram feature dimension mismatch: " +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()));
  const std::size_t n = a.rows(), m = b.rows(), p = a.cols();
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a.ptr() + i * p;
    T* row = out.ptr() + i * m;
    for (std::size_t j = 0; j < m; ++j)
      row[j] = kernel_value(spec, ai, b.ptr() + j * p, p);
  }
  require_finite(out, "Gram matrix");
  return GramMatrix<T>(std::move(out));
}

template <typename T>
std::vector<T> kernel_grad_second(const KernelSpec& spec, std::span<const T> a,
                                  std::span<const T> b) {
  spec.validate();
  check_same_length(a.size(), b.size());
  const std::size_t p = a.size();
  std::vector<T> grad(p);
  switch (spec.family) {
    case KernelFamily::gaussian: {
      const T k = kernel_value(spec, a.data(), b.data(), p);
      const T scale = T(2) * static_cast<T>(spec.lambda) * k;
      for (std::size_t i = 0; i < p; ++i) grad[i] = scale * (a[i] - b[i]);
      break;
    }
    case KernelFamily::linear:
      std::copy(a.begin(), a.end(), grad.begin());
      break;
    case KernelFamily::polynomial: {
      const T base = simd::dot(a.data(), b.data(), p) + static_cast<T>(spec.c);
      const T scale = static_cast<T>(spec.degree) * int_power(base, spec.degree - 1);
      for (std::size_t i = 0; i < p; ++i) grad[i] = scale * a[i];
      break;
    }
  }
  return grad;
}

template <typename T>
double median_bandwidth(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("median_bandwidth expects matrices");
  if (b.rows() > 0 && a.cols() != b.cols())
    throw ShapeError("median_bandwidth feature dimension mismatch");
  const std::size_t pooled = a.rows() + b.rows();
  if (pooled < 2) throw ShapeError("median_bandwidth needs at least two points");
  const std::size_t p = a.cols();

  const std::size_t used = std::min(pooled, kMedianPoolLimit);
  std::vector<const T*> points(used);
  for (std::size_t i = 0; i < used; ++i) {
    const std::size_t idx = used == pooled ? i : i * pooled / used;
    points[i] = idx < a.rows() ? a.ptr() + idx * p
                               : b.ptr() + (idx - a.rows()) * p;
  }

  std::vector<double> distances;
  distances.reserve(used * (used - 1) / 2);
  for (std::size_t i = 0; i < used; ++i)
    for (std::size_t j = i + 1; j < used; ++j)
      distances.push_back(
          static_cast<double>(simd::squared_distance(points[i], points[j], p)));

  const std::size_t count = distances.size();
  const auto upper = distances.begin() + static_cast<std::ptrdiff_t>(count / 2);
  std::nth_element(distances.begin(), upper, distances.end());
  double median = *upper;
  if (count % 2 == 0)
    median = 0.5 * (median + *std::max_element(distances.begin(), upper));
  if (!(median > 0.0) || !std::isfinite(median))
    throw NumericError("degenerate bandwidth: median pairwise distance is " +
                       std::to_string(median));
  return 1.0 / median;
}

#define M3D_INSTANTIATE(T)                                                  \
  template class GramMatrix<T>;                                            \
  template double kernel_eval<T>(const KernelSpec&, std::span<const T>,    \
                                 std::span<const T>);                      \
  template GramMatrix<T> gram<T>(const KernelSpec&, const Tensor<T>&,      \
                                 const Tensor<T>&);                        \
  template std::vector<T> kernel_grad_second<T>(                           \
      const KernelSpec&, std::span<const T>, std::span<const T>);          \
  template double median_bandwidth<T>(const Tensor<T>&, const Tensor<T>&);

M3D_INSTANTIATE(float)
M3D_INSTANTIATE(double)
#undef M3D_INSTANTIATE

}  // namespace m3d
