#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "m3d/data.hpp"
#include "m3d/encoder.hpp"
#include "m3d/factor.hpp"
#include "m3d/kernels.hpp"
#include "m3d/mmd.hpp"
#include "m3d/rng.hpp"

namespace m3d {

// The learnable condensed set. Images are stored class-major as
// (classes * ipc) x C x h x w in normalized space; image j belongs to class
// j / ipc. Each stored image expands to factor^2 training examples.
// Storage is f32, matching the checkpoint payload.
struct SyntheticSet {
  TensorF images;
  std::size_t num_classes = 0;
  std::size_t ipc = 0;
  std::size_t factor = 1;
  UpsampleMode upsample = UpsampleMode::bilinear;
  NormalizationStats stats;
  std::string arch;       // encoder the set was condensed with
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;

  void validate() const;
  std::vector<int> labels() const;
  // ipc x C x h x w slice of one class.
  TensorF class_images(std::size_t c) const;
  // Factor-expanded examples with inherited labels, as a double dataset.
  LabeledDataset expanded() const;

  friend bool operator==(const SyntheticSet&, const SyntheticSet&) = default;
};

enum class InitMode { real_sample, noise };
enum class LossMode { m3d, dm };
enum class Precision { f32, f64 };

std::string to_string(InitMode mode);
std::string to_string(LossMode mode);
std::string to_string(Precision precision);
InitMode parse_init_mode(const std::string& name);
LossMode parse_loss_mode(const std::string& name);
Precision parse_precision(const std::string& name);

struct CondenseConfig {
  std::size_t iterations = 2000;
  std::size_t iterations_per_model = 5;
  double learning_rate = 1.0;
  std::size_t real_batch = 256;
  std::size_t ipc = 10;
  std::size_t factor = 2;
  UpsampleMode upsample = UpsampleMode::bilinear;
  KernelSpec kernel = KernelSpec::gaussian(1.0);
  // Recompute the gaussian lambda from every real batch.
  bool median_bandwidth = true;
  EncoderArch encoder;
  std::uint64_t seed = 0;
  InitMode init = InitMode::real_sample;
  Precision precision = Precision::f32;
  // Moment snapshot every this many iterations (0 disables).
  std::size_t moment_interval = 0;

  void validate() const;
};

// Real-sample mode draws ipc * factor^2 distinct images per class and
// tiles each group of factor^2 into one stored image (factor_compose), so
// that the expanded set starts as down-sampled real examples; with
// factor 1 the stored images are the drawn examples themselves. Noise mode
// fills unit-Gaussian pixels.
SyntheticSet init_synthetic(const LabeledDataset& dataset, std::size_t ipc,
                            InitMode mode, Rng& rng, std::size_t factor = 1,
                            UpsampleMode upsample = UpsampleMode::bilinear);

struct ClassBatch {
  TensorD images;
  std::vector<int> labels;
  std::vector<std::size_t> ids;
};

// n examples of class c: without replacement (partial shuffle) when the class
// holds at least n examples, otherwise with replacement.
ClassBatch sample_class_batch(const LabeledDataset& dataset, std::size_t c,
                              std::size_t n, Rng& rng);

struct CondenseEvent {
  std::size_t iteration = 0;
  std::size_t cls = 0;
  double loss = 0.0;
  double lambda = 0.0;  // gaussian bandwidth used, 0 otherwise
  double seconds = 0.0;
  std::optional<MomentReport> moments;
};

using CondenseSink = std::function<void(const CondenseEvent&)>;

// Loss of one class step: the matching objective between the real batch and
// the factor-expanded synthetic class images under one encoder, with its
// gradient on the stored (unexpanded) images.
template <typename T>
struct ClassStep {
  double loss = 0.0;
  double lambda = 0.0;
  Tensor<T> grad;
  std::optional<MomentReport> moments;
};

template <typename T>
ClassStep<T> class_step(const EncoderParams<T>& encoder, const Tensor<T>& real_images,
                        const Tensor<T>& syn_images, const CondenseConfig& config,
                        LossMode mode, bool want_moments = false);

// Runs the full optimization; `sink` receives one event per (iteration,
// class). With zero iterations the initialization is returned unchanged.
SyntheticSet condense(const LabeledDataset& dataset, const CondenseConfig& config,
                      LossMode mode, const CondenseSink& sink = {});

// Condenses from a caller-supplied starting set (same schedule).
SyntheticSet condense_from(const LabeledDataset& dataset, SyntheticSet start,
                           const CondenseConfig& config, LossMode mode,
                           const CondenseSink& sink = {});

struct MomentDiagnostics {
  std::size_t encoders = 10;
  // Real examples used per class (0 = all), taken in index order.
  std::size_t real_limit = 0;
  std::uint64_t seed = 0;
};

// Moment distances (orders 1..3) between the real classes and the expanded
// synthetic classes, averaged over classes and fresh random encoders.
MomentReport moment_diagnostics(const LabeledDataset& dataset, const SyntheticSet& set,
                                const EncoderArch& arch, const MomentDiagnostics& options);

}  // namespace m3d
