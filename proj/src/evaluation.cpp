#include "m3d/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace m3d {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(decay > 0.0)) throw ConfigError("decay factor must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
}

double TrainConfig::rate_at(std::size_t epoch) const {
  if (epoch >= epochs * 5 / 6) return learning_rate * decay * decay;
  if (epoch >= epochs * 2 / 3) return learning_rate * decay;
  return learning_rate;
}

namespace {

// Softmax cross-entropy over logits rows; writes d(mean loss)/d logits.
double cross_entropy(const TensorF& logits, std::span<const int> labels, TensorF& grad) {
  const std::size_t n = logits.rows(), k = logits.cols();
  grad = TensorF({n, k});
  double total = 0.0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) top = std::max(top, double(logits.at(i, j)));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[j] = std::exp(logits.at(i, j) - top));
    const auto y = static_cast<std::size_t>(labels[i]);
    total += std::log(z) - (logits.at(i, y) - top);
    for (std::size_t j = 0; j < k; ++j)
      grad.at(i, j) = static_cast<float>((p[j] / z - (j == y ? 1.0 : 0.0)) / double(n));
  }
  return total / static_cast<double>(n);
}

void check_compatible(const LabeledDataset& data, const EncoderArch& arch) {
  if (data.channels() != arch.channels || data.height() != arch.height ||
      data.width() != arch.width_px)
    throw ConfigError("encoder " + arch.to_string() + " does not fit images " +
                      shape_string(data.images().shape()));
  if (data.num_classes() > arch.num_classes)
    throw ConfigError("encoder head has fewer outputs than classes");
}

}  // namespace

TrainResult train_classifier(const LabeledDataset& train, const EncoderArch& arch,
                             const TrainConfig& config, Rng& rng) {
  config.validate();
  check_compatible(train, arch);
  for (std::size_t c = 0; c < train.num_classes(); ++c)
    if (train.class_indices(c).empty())
      throw ConfigError("class " + std::to_string(c) + " has no training examples");

  TrainResult result{init_encoder<float>(arch, rng), {}};
  auto& params = result.params;
  std::vector<TensorF> velocity;
  for (const auto& t : params.tensors) velocity.emplace_back(t.shape());

  const std::size_t n = train.size();
  const std::size_t batch = std::min(config.batch_size, n);
  const TensorF images = train.images().cast<float>();
  const std::size_t per = images.slice_size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const float lr = static_cast<float>(config.rate_at(epoch));
    const float mom = static_cast<float>(config.momentum);
    const float wd = static_cast<float>(config.weight_decay);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t count = std::min(batch, n - begin);
      TensorF x({count, images.dim(1), images.dim(2), images.dim(3)});
      std::vector<int> y(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t id = order[begin + k];
        std::copy_n(images.ptr() + id * per, per, x.ptr() + k * per);
        y[k] = train.labels()[id];
      }
      auto fwd = forward(params, x, true);
      TensorF grad_logits;
      const double loss = cross_entropy(fwd.output, y, grad_logits);
      if (!std::isfinite(loss))
        throw NumericError("classifier training diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(count);
      const auto grads = backward_weights(fwd.tape, grad_logits);
      for (std::size_t p = 0; p < params.tensors.size(); ++p) {
        float* w = params.tensors[p].ptr();
        float* v = velocity[p].ptr();
        const float* g = grads[p].ptr();
        for (std::size_t j = 0; j < params.tensors[p].size(); ++j) {
          v[j] = mom * v[j] + g[j] + wd * w[j];
          w[j] -= lr * v[j];
        }
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return result;
}

std::vector<int> predict(const EncoderParams<float>& params, const LabeledDataset& data) {
  params.index_of("head.weight");
  check_compatible(data, params.arch);
  constexpr std::size_t kChunk = 500;
  std::vector<int> out;
  out.reserve(data.size());
  std::vector<std::size_t> ids;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - begin);
    ids.resize(count);
    std::iota(ids.begin(), ids.end(), begin);
    const TensorF logits = encode(params, data.gather(ids).cast<float>(), true);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

double test_accuracy(const EncoderParams<float>& params, const LabeledDataset& test) {
  if (test.size() == 0) throw ConfigError("empty test set");
  const auto pred = predict(params, test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test.labels()[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

EvalReport summarize(std::vector<double> accuracies, double seconds) {
  EvalReport r;
  r.accuracies = std::move(accuracies);
  r.seconds = seconds;
  if (r.accuracies.empty()) return r;
  const double n = static_cast<double>(r.accuracies.size());
  r.mean = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
  if (r.accuracies.size() > 1) {
    double sq = 0.0;
    for (const double a : r.accuracies) sq += (a - r.mean) * (a - r.mean);
    r.std = std::sqrt(sq / (n - 1.0));
  }
  return r;
}

EvalReport evaluate_dataset(const LabeledDataset& train, const LabeledDataset& test,
                            const EncoderArch& arch, const TrainConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> acc;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    Rng rng = Rng::stream(config.seed, Stream::evaluation, {r});
    const auto trained = train_classifier(train, arch, config, rng);
    acc.push_back(test_accuracy(trained.params, test));
  }
  return summarize(std::move(acc), std::chrono::duration<double>(
                                       std::chrono::steady_clock::now() - start)
                                       .count());
}

EvalReport evaluate_condensed(const SyntheticSet& set, const LabeledDataset& test,
                              const EncoderArch& arch, const TrainConfig& config) {
  return evaluate_dataset(set.expanded(), test, arch, config);
}

// ---------------------------------------------------------------- coresets

LabeledDataset select_random(const LabeledDataset& dataset, std::size_t ipc, Rng& rng) {
  if (ipc == 0) throw ConfigError("ipc must be >= 1");
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    auto ids = dataset.class_indices(c);
    if (ids.size() < ipc)
      throw ConfigError("class " + std::to_string(c) + " has fewer than " +
                        std::to_string(ipc) + " examples");
    for (std::size_t i = 0; i < ipc; ++i)
      std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
    ids.resize(ipc);
    std::sort(ids.begin(), ids.end());
    keep.insert(keep.end(), ids.begin(), ids.end());
  }
  return dataset.subset(keep);
}

std::vector<std::vector<std::size_t>> herding_order(const LabeledDataset& dataset,
                                                    const TensorD& features,
                                                    std::size_t ipc) {
  if (features.rank() != 2 || features.rows() != dataset.size())
    throw ShapeError("herding features must have one row per example");
  if (ipc == 0) throw ConfigError("ipc must be >= 1");
  const std::size_t p = features.cols();
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    const auto& ids = dataset.class_indices(c);
    if (ids.size() < ipc)
      throw ConfigError("class " + std::to_string(c) + " has fewer than " +
                        std::to_string(ipc) + " examples");
    std::vector<double> mean(p, 0.0), sum(p, 0.0);
    for (const auto id : ids)
      for (std::size_t j = 0; j < p; ++j) mean[j] += features.at(id, j);
    for (auto& m : mean) m /= static_cast<double>(ids.size());
    std::vector<bool> used(ids.size(), false);
    std::vector<std::size_t> chosen;
    for (std::size_t t = 0; t < ipc; ++t) {
      const double inv = 1.0 / static_cast<double>(t + 1);
      std::size_t best = ids.size();
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (used[k]) continue;
        double d = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
          const double diff = mean[j] - (sum[j] + features.at(ids[k], j)) * inv;
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      used[best] = true;
      chosen.push_back(ids[best]);
      for (std::size_t j = 0; j < p; ++j) sum[j] += features.at(ids[best], j);
    }
    out.push_back(std::move(chosen));
  }
  return out;
}

LabeledDataset select_herding(const LabeledDataset& dataset, std::size_t ipc,
                              const TensorD& features) {
  std::vector<std::size_t> keep;
  for (auto& ids : herding_order(dataset, features, ipc)) {
    std::sort(ids.begin(), ids.end());
    keep.insert(keep.end(), ids.begin(), ids.end());
  }
  return dataset.subset(keep);
}

LabeledDataset select_herding(const LabeledDataset& dataset, std::size_t ipc,
                              const EncoderParams<float>& encoder) {
  check_compatible(dataset, encoder.arch);
  constexpr std::size_t kChunk = 500;
  const std::size_t p = encoder.arch.rep_dim();
  TensorD features({dataset.size(), p});
  std::vector<std::size_t> ids;
  for (std::size_t begin = 0; begin < dataset.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, dataset.size() - begin);
    ids.resize(count);
    std::iota(ids.begin(), ids.end(), begin);
    const TensorF reps = encode(encoder, dataset.gather(ids).cast<float>(), false);
    std::copy(reps.values().begin(), reps.values().end(), features.ptr() + begin * p);
  }
  return select_herding(dataset, ipc, features);
}

}  // namespace m3d
