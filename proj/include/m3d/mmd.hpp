#pragma once

#include <array>

#include "m3d/kernels.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

enum class RepSource { real, synthetic };

// One class worth of encoder outputs, n x p with n >= 1 and finite entries.
template <typename T>
class RepBatch {
 public:
  RepBatch(Tensor<T> reps, RepSource source);

  const Tensor<T>& reps() const noexcept { return reps_; }
  std::size_t size() const { return reps_.rows(); }
  std::size_t dim() const { return reps_.cols(); }
  RepSource source() const noexcept { return source_; }

 private:
  Tensor<T> reps_;
  RepSource source_;
};

template <typename T>
RepBatch<T> real_batch(Tensor<T> reps) {
  return RepBatch<T>(std::move(reps), RepSource::real);
}
template <typename T>
RepBatch<T> synthetic_batch(Tensor<T> reps) {
  return RepBatch<T>(std::move(reps), RepSource::synthetic);
}

// |mean(real) - mean(syn)|^2, the first-moment matching objective.
template <typename T>
double dm_loss(const RepBatch<T>& real, const RepBatch<T>& syn);

// d dm_loss / d syn: every row equals 2 (mean(syn) - mean(real)) / m.
template <typename T>
Tensor<T> dm_grad_syn(const RepBatch<T>& real, const RepBatch<T>& syn);

// Biased (V-statistic) squared MMD: mean K_TT + mean K_SS - 2 mean K_TS.
template <typename T>
double mmd2_biased(const KernelSpec& spec, const RepBatch<T>& real,
                   const RepBatch<T>& syn);

// Unbiased (U-statistic) squared MMD: self terms drop their diagonals and
// divide by n (n - 1). Needs n >= 2 on both sides; may be negative.
template <typename T>
double mmd2_unbiased(const KernelSpec& spec, const RepBatch<T>& real,
                     const RepBatch<T>& syn);

// d mmd2_biased / d syn (m x p). The K_SS term contributes through both of
// its argument slots.
template <typename T>
Tensor<T> mmd2_grad_syn(const KernelSpec& spec, const RepBatch<T>& real,
                        const RepBatch<T>& syn);

template <typename T>
struct LossAndGrad {
  double loss;
  Tensor<T> grad;
};

// Loss and gradient sharing one set of Gram matrices; what the condenser
// calls every step.
template <typename T>
LossAndGrad<T> mmd2_biased_with_grad(const KernelSpec& spec,
                                     const RepBatch<T>& real,
                                     const RepBatch<T>& syn);

template <typename T>
LossAndGrad<T> dm_loss_with_grad(const RepBatch<T>& real,
                                 const RepBatch<T>& syn);

// Euclidean distance between per-dimension moment vectors of the two
// batches: order 1 mean, 2 population variance, 3 skewness (third
// standardized moment, 0 on zero-variance dimensions). Orders 2 and 3 need
// at least two rows on each side.
template <typename T>
double moment_distance(const RepBatch<T>& real, const RepBatch<T>& syn,
                       int order);

// Orders 1..3 in that order.
struct MomentReport {
  std::array<double, 3> distance{};

  MomentReport& operator+=(const MomentReport& other) {
    for (std::size_t i = 0; i < 3; ++i) distance[i] += other.distance[i];
    return *this;
  }
  MomentReport scaled(double factor) const {
    MomentReport r = *this;
    for (auto& d : r.distance) d *= factor;
    return r;
  }
};

template <typename T>
MomentReport moment_report(const RepBatch<T>& real, const RepBatch<T>& syn);

}  // namespace m3d
