#include "m3d/condenser.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace m3d {

// ---------------------------------------------------------------- synthetic set

void SyntheticSet::validate() const {
  if (ipc == 0) throw ShapeError("synthetic set needs ipc >= 1");
  if (factor == 0) throw ShapeError("synthetic set needs factor >= 1");
  if (images.rank() != 4 || images.dim(0) != num_classes * ipc)
    throw ShapeError("synthetic images " + shape_string(images.shape()) +
                     " do not hold " + std::to_string(num_classes) + " x " +
                     std::to_string(ipc) + " images");
  if (images.dim(2) % factor != 0 || images.dim(3) % factor != 0)
    throw ShapeError("factor " + std::to_string(factor) + " does not divide image size");
}

std::vector<int> SyntheticSet::labels() const {
  std::vector<int> out(num_classes * ipc);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<int>(j / ipc);
  return out;
}

TensorF SyntheticSet::class_images(std::size_t c) const {
  if (c >= num_classes) throw ShapeError("class out of range");
  const std::size_t per = images.slice_size();
  std::vector<float> data(images.ptr() + c * ipc * per, images.ptr() + (c + 1) * ipc * per);
  return TensorF({ipc, images.dim(1), images.dim(2), images.dim(3)}, std::move(data));
}

LabeledDataset SyntheticSet::expanded() const {
  validate();
  const TensorD wide = factor_expand(images.cast<double>(), factor, upsample);
  const std::size_t per_image = factor * factor;
  std::vector<int> labels(wide.dim(0));
  for (std::size_t j = 0; j < labels.size(); ++j)
    labels[j] = static_cast<int>(j / (ipc * per_image));
  LabeledDataset out(wide, std::move(labels), num_classes, dataset + "-synthetic");
  out.set_stats(stats);
  return out;
}

// ---------------------------------------------------------------- enums

std::string to_string(InitMode mode) {
  return mode == InitMode::real_sample ? "real" : "noise";
}
std::string to_string(LossMode mode) { return mode == LossMode::m3d ? "m3d" : "dm"; }
std::string to_string(Precision precision) {
  return precision == Precision::f32 ? "f32" : "f64";
}

InitMode parse_init_mode(const std::string& name) {
  if (name == "real") return InitMode::real_sample;
  if (name == "noise") return InitMode::noise;
  throw ConfigError("unknown init mode '" + name + "'");
}
LossMode parse_loss_mode(const std::string& name) {
  if (name == "m3d") return LossMode::m3d;
  if (name == "dm") return LossMode::dm;
  throw ConfigError("unknown loss '" + name + "'");
}
Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + name + "'");
}

void CondenseConfig::validate() const {
  if (iterations_per_model == 0) throw ConfigError("iterations per model must be >= 1");
  if (iterations != 0 && iterations < iterations_per_model)
    throw ConfigError("total iterations must be >= iterations per model");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be positive");
  if (real_batch == 0) throw ConfigError("real batch must be >= 1");
  if (ipc == 0) throw ConfigError("ipc must be >= 1");
  if (factor == 0) throw ConfigError("factor must be >= 1");
  kernel.validate();
  encoder.validate();
}

// ---------------------------------------------------------------- sampling

namespace {

// First k entries of a seeded Fisher-Yates shuffle of `ids`.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> ids,
                                                  std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  return ids;
}

}  // namespace

ClassBatch sample_class_batch(const LabeledDataset& dataset, std::size_t c,
                              std::size_t n, Rng& rng) {
  const auto& members = dataset.class_indices(c);
  if (members.empty()) throw ShapeError("class " + std::to_string(c) + " is empty");
  ClassBatch batch;
  if (n <= members.size()) {
    batch.ids = draw_without_replacement(members, n, rng);
  } else {
    batch.ids.resize(n);
    for (auto& id : batch.ids) id = members[rng.below(members.size())];
  }
  batch.images = dataset.gather(batch.ids);
  batch.labels.assign(n, static_cast<int>(c));
  return batch;
}

SyntheticSet init_synthetic(const LabeledDataset& dataset, std::size_t ipc,
                            InitMode mode, Rng& rng, std::size_t factor,
                            UpsampleMode upsample) {
  if (ipc == 0) throw ConfigError("ipc must be >= 1");
  if (factor == 0) throw ConfigError("factor must be >= 1");
  if (dataset.height() % factor != 0 || dataset.width() % factor != 0)
    throw ShapeError("factor " + std::to_string(factor) + " does not divide image size");
  SyntheticSet set;
  set.num_classes = dataset.num_classes();
  set.ipc = ipc;
  set.factor = factor;
  set.upsample = upsample;
  set.stats = dataset.stats();
  set.dataset = dataset.name();
  const Shape shape{set.num_classes * ipc, dataset.channels(), dataset.height(),
                    dataset.width()};
  if (mode == InitMode::noise) {
    set.images = gaussian_draw<float>(rng, shape, 0.0f, 1.0f);
    return set;
  }
  const std::size_t draws = ipc * factor * factor;
  set.images = TensorF(shape);
  const std::size_t per = set.images.slice_size();
  for (std::size_t c = 0; c < set.num_classes; ++c) {
    const auto& members = dataset.class_indices(c);
    if (members.size() < draws)
      throw ConfigError("class " + std::to_string(c) + " has " +
                        std::to_string(members.size()) + " examples, need " +
                        std::to_string(draws));
    const auto ids = draw_without_replacement(members, draws, rng);
    const TensorD composed = factor_compose(dataset.gather(ids), factor);
    std::transform(composed.values().begin(), composed.values().end(),
                   set.images.ptr() + c * ipc * per,
                   [](double v) { return static_cast<float>(v); });
  }
  return set;
}

// ---------------------------------------------------------------- one class step

template <typename T>
ClassStep<T> class_step(const EncoderParams<T>& encoder, const Tensor<T>& real_images,
                        const Tensor<T>& syn_images, const CondenseConfig& config,
                        LossMode mode, bool want_moments) {
  const RepBatch<T> real = real_batch(encode(encoder, real_images, false));
  const Tensor<T> wide = factor_expand(syn_images, config.factor, config.upsample);
  auto fwd = forward(encoder, wide, false);
  const RepBatch<T> syn = synthetic_batch(fwd.output);

  ClassStep<T> step;
  LossAndGrad<T> lg;
  if (mode == LossMode::dm) {
    lg = dm_loss_with_grad(real, syn);
  } else {
    KernelSpec spec = config.kernel;
    if (spec.family == KernelFamily::gaussian && config.median_bandwidth)
      spec.lambda = median_bandwidth(real.reps(), Tensor<T>({0, real.dim()}));
    if (spec.family == KernelFamily::gaussian) step.lambda = spec.lambda;
    lg = mmd2_biased_with_grad(spec, real, syn);
  }
  if (!std::isfinite(lg.loss)) throw NumericError("non-finite matching loss");
  if (want_moments && real.size() >= 2 && syn.size() >= 2)
    step.moments = moment_report(real, syn);
  step.loss = lg.loss;
  const Tensor<T> grad_wide = backward_inputs(fwd.tape, lg.grad);
  step.grad = factor_expand_backward(grad_wide, config.factor, config.upsample);
  return step;
}

// ---------------------------------------------------------------- main loop

namespace {

template <typename T>
SyntheticSet run_condense(const LabeledDataset& dataset, SyntheticSet set,
                          const CondenseConfig& config, LossMode mode,
                          const CondenseSink& sink) {
  const std::size_t classes = set.num_classes;
  const std::size_t per = set.images.slice_size();
  const std::size_t per_class = set.ipc * per;
  Tensor<T> work = set.images.template cast<T>();
  const Shape class_shape{set.ipc, set.images.dim(1), set.images.dim(2), set.images.dim(3)};
  const auto start = std::chrono::steady_clock::now();

  EncoderParams<T> encoder;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (it % config.iterations_per_model == 0) {
      Rng init = Rng::stream(config.seed, Stream::encoder_init,
                             {it / config.iterations_per_model});
      encoder = init_encoder<T>(config.encoder, init);
    }
    const bool snapshot = config.moment_interval != 0 &&
                          (it % config.moment_interval == 0 || it + 1 == config.iterations);
    for (std::size_t c = 0; c < classes; ++c) {
      Rng pick = Rng::stream(config.seed, Stream::real_batch, {it, c});
      const ClassBatch real = sample_class_batch(dataset, c, config.real_batch, pick);
      T* slot = work.ptr() + c * per_class;
      const Tensor<T> syn(class_shape, std::vector<T>(slot, slot + per_class));
      ClassStep<T> step;
      try {
        step = class_step(encoder, real.images.template cast<T>(), syn, config, mode, snapshot);
      } catch (const NumericError& e) {
        throw NumericError("iteration " + std::to_string(it) + ", class " +
                           std::to_string(c) + ": " + e.what());
      }
      const T lr = static_cast<T>(config.learning_rate);
      for (std::size_t k = 0; k < per_class; ++k) slot[k] -= lr * step.grad[k];
      if (sink) {
        CondenseEvent ev;
        ev.iteration = it;
        ev.cls = c;
        ev.loss = step.loss;
        ev.lambda = step.lambda;
        ev.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        ev.moments = step.moments;
        sink(ev);
      }
    }
  }
  if (config.iterations > 0) {
    if (!work.all_finite()) throw NumericError("synthetic images became non-finite");
    set.images = work.template cast<float>();
  }
  set.iterations += config.iterations;
  return set;
}

}  // namespace

SyntheticSet condense_from(const LabeledDataset& dataset, SyntheticSet start,
                           const CondenseConfig& config, LossMode mode,
                           const CondenseSink& sink) {
  config.validate();
  start.validate();
  if (config.encoder.channels != dataset.channels() ||
      config.encoder.height != dataset.height() ||
      config.encoder.width_px != dataset.width())
    throw ConfigError("encoder input shape does not match the dataset");
  if (start.num_classes != dataset.num_classes())
    throw ConfigError("synthetic set and dataset disagree on class count");
  if (start.factor != config.factor || start.upsample != config.upsample)
    throw ConfigError("synthetic set and config disagree on factor settings");
  start.arch = config.encoder.to_string();
  start.seed = config.seed;
  if (config.precision == Precision::f64)
    return run_condense<double>(dataset, std::move(start), config, mode, sink);
  return run_condense<float>(dataset, std::move(start), config, mode, sink);
}

SyntheticSet condense(const LabeledDataset& dataset, const CondenseConfig& config,
                      LossMode mode, const CondenseSink& sink) {
  config.validate();
  Rng rng = Rng::stream(config.seed, Stream::synthetic_init);
  SyntheticSet set =
      init_synthetic(dataset, config.ipc, config.init, rng, config.factor, config.upsample);
  return condense_from(dataset, std::move(set), config, mode, sink);
}

// ---------------------------------------------------------------- diagnostics

MomentReport moment_diagnostics(const LabeledDataset& dataset, const SyntheticSet& set,
                                const EncoderArch& arch, const MomentDiagnostics& options) {
  if (options.encoders == 0) throw ConfigError("moment diagnostics need >= 1 encoder");
  if (set.num_classes != dataset.num_classes())
    throw ConfigError("synthetic set and dataset disagree on class count");
  const LabeledDataset wide = set.expanded();
  std::vector<TensorF> real_images, syn_images;
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    auto ids = dataset.class_indices(c);
    if (options.real_limit != 0 && ids.size() > options.real_limit)
      ids.resize(options.real_limit);
    real_images.push_back(dataset.gather(ids).cast<float>());
    syn_images.push_back(wide.gather(wide.class_indices(c)).cast<float>());
  }
  MomentReport total;
  for (std::size_t e = 0; e < options.encoders; ++e) {
    Rng rng = Rng::stream(options.seed, Stream::diagnostic, {e});
    const auto encoder = init_encoder<float>(arch, rng);
    for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
      const RepBatch<float> real = real_batch(encode(encoder, real_images[c], false));
      const RepBatch<float> syn = synthetic_batch(encode(encoder, syn_images[c], false));
      total += moment_report(real, syn);
    }
  }
  return total.scaled(1.0 / static_cast<double>(options.encoders * dataset.num_classes()));
}

template ClassStep<float> class_step<float>(const EncoderParams<float>&, const TensorF&,
                                            const TensorF&, const CondenseConfig&,
                                            LossMode, bool);
template ClassStep<double> class_step<double>(const EncoderParams<double>&, const TensorD&,
                                              const TensorD&, const CondenseConfig&,
                                              LossMode, bool);

}  // namespace m3d
