#include "m3d/mmd.hpp"

#include <cmath>
#include <vector>

#include "m3d/simd.hpp"

namespace m3d {

template <typename T>
RepBatch<T>::RepBatch(Tensor<T> reps, RepSource source)
    : reps_(std::move(reps)), source_(source) {
  if (reps_.rank() != 2) throw ShapeError("representation batch must be n x p");
  if (reps_.rows() == 0) throw ShapeError("representation batch is empty");
  require_finite(reps_, "representation batch");
}

namespace {

template <typename T>
void check_compatible(const RepBatch<T>& real, const RepBatch<T>& syn) {
  if (real.dim() != syn.dim())
    throw ShapeError("representation dimension mismatch: " +
                     std::to_string(real.dim()) + " vs " +
                     std::to_string(syn.dim()));
}

template <typename T>
std::vector<double> column_means(const Tensor<T>& x) {
  const std::size_t n = x.rows(), p = x.cols();
  std::vector<double> mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.ptr() + i * p;
    for (std::size_t j = 0; j < p; ++j) mean[j] += row[j];
  }
  for (auto& v : mean) v /= static_cast<double>(n);
  return mean;
}

// Every row is 2 (mean(syn) - mean(real)) / m. Shared by the first-moment
// loss and by the linear-kernel MMD, whose gradients coincide.
template <typename T>
Tensor<T> mean_gap_gradient(const RepBatch<T>& real, const RepBatch<T>& syn) {
  const auto mr = column_means(real.reps());
  const auto ms = column_means(syn.reps());
  const std::size_t m = syn.size(), p = syn.dim();
  std::vector<T> row(p);
  const double scale = 2.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < p; ++j)
    row[j] = static_cast<T>(scale * (ms[j] - mr[j]));
  Tensor<T> grad({m, p});
  for (std::size_t i = 0; i < m; ++i)
    std::copy(row.begin(), row.end(), grad.ptr() + i * p);
  return grad;
}

template <typename T>
double int_power(double base, int exponent) {
  double r = 1.0;
  for (int i = 0; i < exponent; ++i) r *= base;
  return r;
}

// Column sums of an n x m matrix, accumulated in double.
template <typename T>
std::vector<double> column_sums(const Tensor<T>& k) {
  std::vector<double> sums(k.cols(), 0.0);
  for (std::size_t i = 0; i < k.rows(); ++i)
    for (std::size_t j = 0; j < k.cols(); ++j) sums[j] += k.at(i, j);
  return sums;
}

// Adds coeff * (W^T X)_j (+ coeff * diag_coeff * colsum(W)_j * S_j) into
// grad. W is rows(X) x m. The diagonal term carries the -b part of the
// Gaussian derivative 2 lambda k(a, b) (a - b).
template <typename T>
void accumulate_weighted(Tensor<T>& grad, const Tensor<T>& weights,
                         const Tensor<T>& x, const Tensor<T>& syn,
                         double coeff, bool subtract_diag) {
  const std::size_t m = grad.rows(), p = grad.cols();
  simd::gemm<T>(m, p, weights.rows(), static_cast<T>(coeff),
                simd::transposed(weights.ptr(), weights.cols()),
                simd::row_major(x.ptr(), p), T(1), grad.ptr(), p);
  if (subtract_diag) {
    const auto sums = column_sums(weights);
    for (std::size_t j = 0; j < m; ++j)
      simd::axpy(static_cast<T>(-coeff * sums[j]), syn.ptr() + j * p,
                 grad.ptr() + j * p, p);
  }
}

// Entrywise derivative factor of the polynomial kernel with respect to the
// inner product: d (u + c)^d / du.
template <typename T>
Tensor<T> polynomial_weights(const KernelSpec& spec, const Tensor<T>& a,
                             const Tensor<T>& b) {
  const auto lin = gram(KernelSpec::linear(), a, b);
  Tensor<T> w(lin.values().shape());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<T>(spec.degree *
                          int_power<T>(lin.values()[i] + spec.c, spec.degree - 1));
  return w;
}

template <typename T>
Tensor<T> kernel_gradient(const KernelSpec& spec, const RepBatch<T>& real,
                          const RepBatch<T>& syn, const GramMatrix<T>* k_ss,
                          const GramMatrix<T>* k_ts) {
  const std::size_t n = real.size(), m = syn.size(), p = syn.dim();
  const double self_coeff = 2.0 / (static_cast<double>(m) * m);
  const double cross_coeff = -2.0 / (static_cast<double>(n) * m);
  Tensor<T> grad({m, p});
  switch (spec.family) {
    case KernelFamily::linear:
      return mean_gap_gradient(real, syn);
    case KernelFamily::gaussian: {
      const double two_lambda = 2.0 * spec.lambda;
      accumulate_weighted(grad, k_ss->values(), syn.reps(), syn.reps(),
                          two_lambda * self_coeff, true);
      accumulate_weighted(grad, k_ts->values(), real.reps(), syn.reps(),
                          two_lambda * cross_coeff, true);
      break;
    }
    case KernelFamily::polynomial: {
      accumulate_weighted(grad, polynomial_weights(spec, syn.reps(), syn.reps()),
                          syn.reps(), syn.reps(), self_coeff, false);
      accumulate_weighted(grad, polynomial_weights(spec, real.reps(), syn.reps()),
                          real.reps(), syn.reps(), cross_coeff, false);
      break;
    }
  }
  require_finite(grad, "MMD gradient");
  return grad;
}

}  // namespace

template <typename T>
double dm_loss(const RepBatch<T>& real, const RepBatch<T>& syn) {
  check_compatible(real, syn);
  const auto mr = column_means(real.reps());
  const auto ms = column_means(syn.reps());
  double total = 0.0;
  for (std::size_t j = 0; j < mr.size(); ++j) {
    const double d = mr[j] - ms[j];
    total += d * d;
  }
  return total;
}

template <typename T>
Tensor<T> dm_grad_syn(const RepBatch<T>& real, const RepBatch<T>& syn) {
  check_compatible(real, syn);
  return mean_gap_gradient(real, syn);
}

template <typename T>
double mmd2_biased(const KernelSpec& spec, const RepBatch<T>& real,
                   const RepBatch<T>& syn) {
  check_compatible(real, syn);
  const double k_tt = gram(spec, real.reps(), real.reps()).mean();
  const double k_ss = gram(spec, syn.reps(), syn.reps()).mean();
  const double k_ts = gram(spec, real.reps(), syn.reps()).mean();
  return k_tt + k_ss - 2.0 * k_ts;
}

template <typename T>
double mmd2_unbiased(const KernelSpec& spec, const RepBatch<T>& real,
                     const RepBatch<T>& syn) {
  check_compatible(real, syn);
  if (real.size() < 2 || syn.size() < 2)
    throw ShapeError("unbiased MMD needs at least two samples per side");
  const double k_tt = gram(spec, real.reps(), real.reps()).off_diagonal_mean();
  const double k_ss = gram(spec, syn.reps(), syn.reps()).off_diagonal_mean();
  const double k_ts = gram(spec, real.reps(), syn.reps()).mean();
  return k_tt + k_ss - 2.0 * k_ts;
}

template <typename T>
Tensor<T> mmd2_grad_syn(const KernelSpec& spec, const RepBatch<T>& real,
                        const RepBatch<T>& syn) {
  check_compatible(real, syn);
  spec.validate();
  if (spec.family != KernelFamily::gaussian)
    return kernel_gradient<T>(spec, real, syn, nullptr, nullptr);
  const auto k_ss = gram(spec, syn.reps(), syn.reps());
  const auto k_ts = gram(spec, real.reps(), syn.reps());
  return kernel_gradient<T>(spec, real, syn, &k_ss, &k_ts);
}

template <typename T>
LossAndGrad<T> mmd2_biased_with_grad(const KernelSpec& spec,
                                     const RepBatch<T>& real,
                                     const RepBatch<T>& syn) {
  check_compatible(real, syn);
  const auto k_tt = gram(spec, real.reps(), real.reps());
  const auto k_ss = gram(spec, syn.reps(), syn.reps());
  const auto k_ts = gram(spec, real.reps(), syn.reps());
  const double loss = k_tt.mean() + k_ss.mean() - 2.0 * k_ts.mean();
  if (!std::isfinite(loss)) throw NumericError("non-finite MMD loss");
  return {loss, kernel_gradient<T>(spec, real, syn, &k_ss, &k_ts)};
}

template <typename T>
LossAndGrad<T> dm_loss_with_grad(const RepBatch<T>& real,
                                 const RepBatch<T>& syn) {
  const double loss = dm_loss(real, syn);
  if (!std::isfinite(loss)) throw NumericError("non-finite DM loss");
  return {loss, mean_gap_gradient(real, syn)};
}

namespace {

// Per-dimension moment vector of the requested order, in double.
template <typename T>
std::vector<double> moment_vector(const Tensor<T>& x, int order) {
  const std::size_t n = x.rows(), p = x.cols();
  const auto mean = column_means(x);
  if (order == 1) return mean;
  std::vector<double> m2(p, 0.0), m3(p, 0.0), sq(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.ptr() + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      const double d = row[j] - mean[j];
      m2[j] += d * d;
      m3[j] += d * d * d;
      sq[j] += static_cast<double>(row[j]) * row[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < p; ++j) {
    m2[j] *= inv_n;
    m3[j] *= inv_n;
  }
  if (order == 2) return m2;
  std::vector<double> skew(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    // Variance at rounding level of the raw second moment counts as zero.
    if (m2[j] <= 1e-12 * sq[j] * inv_n || m2[j] == 0.0) continue;
    skew[j] = m3[j] / std::pow(m2[j], 1.5);
  }
  return skew;
}

}  // namespace

template <typename T>
double moment_distance(const RepBatch<T>& real, const RepBatch<T>& syn,
                       int order) {
  check_compatible(real, syn);
  if (order < 1 || order > 3)
    throw ShapeError("moment order must be 1, 2 or 3");
  if (order >= 2 && (real.size() < 2 || syn.size() < 2))
    throw ShapeError("moment order " + std::to_string(order) +
                     " needs at least two samples per side");
  const auto a = moment_vector(real.reps(), order);
  const auto b = moment_vector(syn.reps(), order);
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    total += d * d;
  }
  return std::sqrt(total);
}

template <typename T>
MomentReport moment_report(const RepBatch<T>& real, const RepBatch<T>& syn) {
  MomentReport report;
  for (int order = 1; order <= 3; ++order)
    report.distance[static_cast<std::size_t>(order - 1)] =
        moment_distance(real, syn, order);
  return report;
}

#define M3D_INSTANTIATE(T)                                                    \
  template class RepBatch<T>;                                                \
  template double dm_loss<T>(const RepBatch<T>&, const RepBatch<T>&);        \
  template Tensor<T> dm_grad_syn<T>(const RepBatch<T>&, const RepBatch<T>&); \
  template double mmd2_biased<T>(const KernelSpec&, const RepBatch<T>&,      \
                                 const RepBatch<T>&);                        \
  template double mmd2_unbiased<T>(const KernelSpec&, const RepBatch<T>&,    \
                                   const RepBatch<T>&);                      \
  template Tensor<T> mmd2_grad_syn<T>(const KernelSpec&, const RepBatch<T>&, \
                                      const RepBatch<T>&);                   \
  template LossAndGrad<T> mmd2_biased_with_grad<T>(                          \
      const KernelSpec&, const RepBatch<T>&, const RepBatch<T>&);            \
  template LossAndGrad<T> dm_loss_with_grad<T>(const RepBatch<T>&,           \
                                               const RepBatch<T>&);          \
  template double moment_distance<T>(const RepBatch<T>&, const RepBatch<T>&, \
                                     int);                                   \
  template MomentReport moment_report<T>(const RepBatch<T>&,                 \
                                         const RepBatch<T>&);

M3D_INSTANTIATE(float)
M3D_INSTANTIATE(double)
#undef M3D_INSTANTIATE

}  // namespace m3d
