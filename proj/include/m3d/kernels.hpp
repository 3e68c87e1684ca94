#pragma once

#include <span>
#include <string>
#include <vector>

#include "m3d/tensor.hpp"

namespace m3d {

enum class KernelFamily { gaussian, linear, polynomial };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(const std::string& name);

// Positive semidefinite kernel on representation vectors:
//   gaussian    exp(-lambda * |a - b|^2)      lambda > 0
//   linear      a . b
//   polynomial  (a . b + c)^degree            c >= 0, degree >= 1
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double lambda = 1.0;
  double c = 1.0;
  int degree = 2;

  static KernelSpec gaussian(double lambda) {
    return {KernelFamily::gaussian, lambda, 1.0, 2};
  }
  static KernelSpec linear() { return {KernelFamily::linear, 1.0, 0.0, 1}; }
  static KernelSpec polynomial(double c = 1.0, int degree = 2) {
    return {KernelFamily::polynomial, 1.0, c, degree};
  }

  // Throws ConfigError when the hyperparameters break positive
  // semidefiniteness.
  void validate() const;
  std::string describe() const;
};

// Matrix of kernel evaluations K[i][j] = k(A_i, B_j).
template <typename T>
class GramMatrix {
 public:
  explicit GramMatrix(Tensor<T> values) : values_(std::move(values)) {}

  const Tensor<T>& values() const noexcept { return values_; }
  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  T at(std::size_t i, std::size_t j) const { return values_.at(i, j); }

  // Mean over every entry, accumulated row by row in double.
  double mean() const;
  // Mean over entries with i != j; requires a square matrix with n >= 2.
  double off_diagonal_mean() const;

 private:
  Tensor<T> values_;
};

template <typename T>
double kernel_eval(const KernelSpec& spec, std::span<const T> a,
                   std::span<const T> b);

// A is n x p, B is m x p; result is n x m.
template <typename T>
GramMatrix<T> gram(const KernelSpec& spec, const Tensor<T>& a,
                   const Tensor<T>& b);

// Gradient of k(a, b) with respect to its second argument.
template <typename T>
std::vector<T> kernel_grad_second(const KernelSpec& spec, std::span<const T> a,
                                  std::span<const T> b);

// Median heuristic: lambda = 1 / median pairwise squared distance over the
// pooled rows of A and B (B may have zero rows). Pools larger than
// kMedianPoolLimit are thinned to evenly strided rows first. Throws
// NumericError when the median distance is zero.
inline constexpr std::size_t kMedianPoolLimit = 1000;

template <typename T>
double median_bandwidth(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace m3d
