#pragma once

#include <cstdint>
#include <vector>

#include "m3d/condenser.hpp"
#include "m3d/data.hpp"
#include "m3d/encoder.hpp"
#include "m3d/rng.hpp"

namespace m3d {

// SGD with momentum and coupled weight decay (g += wd * w; v = m v + g;
// w -= lr v). The learning rate drops by `decay` at 2/3 and again at 5/6 of
// the epochs.
struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double decay = 0.2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;

  void validate() const;
  double rate_at(std::size_t epoch) const;
};

struct TrainResult {
  EncoderParams<float> params;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Trains encoder + head from a fresh initialization drawn from `rng`;
// shuffling draws from the same generator afterwards.
TrainResult train_classifier(const LabeledDataset& train, const EncoderArch& arch,
                             const TrainConfig& config, Rng& rng);

// Class scores for every example; argmax ties go to the lower index.
std::vector<int> predict(const EncoderParams<float>& params, const LabeledDataset& data);
double test_accuracy(const EncoderParams<float>& params, const LabeledDataset& test);

struct EvalReport {
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one repeat
  double seconds = 0.0;
};

EvalReport summarize(std::vector<double> accuracies, double seconds);

// cfg.repeats independent trainings with seeds split from cfg.seed.
EvalReport evaluate_dataset(const LabeledDataset& train, const LabeledDataset& test,
                            const EncoderArch& arch, const TrainConfig& config);

// Trains on the factor-expanded synthetic set.
EvalReport evaluate_condensed(const SyntheticSet& set, const LabeledDataset& test,
                              const EncoderArch& arch, const TrainConfig& config);

// ipc examples per class without replacement, kept in index order.
LabeledDataset select_random(const LabeledDataset& dataset, std::size_t ipc, Rng& rng);

// Greedy herding per class on rows of `features` (n x p, aligned with the
// dataset): each step adds the unselected example that brings the running
// selected mean closest to the class mean; ties go to the lower index.
// Returns selected ids per class in selection order.
std::vector<std::vector<std::size_t>> herding_order(const LabeledDataset& dataset,
                                                    const TensorD& features,
                                                    std::size_t ipc);

LabeledDataset select_herding(const LabeledDataset& dataset, std::size_t ipc,
                              const TensorD& features);
LabeledDataset select_herding(const LabeledDataset& dataset, std::size_t ipc,
                              const EncoderParams<float>& encoder);

}  // namespace m3d
