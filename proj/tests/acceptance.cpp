// Acceptance runner: `acceptance N` checks criterion N (1-9) and prints one
// PASS/FAIL line; `acceptance all` runs every criterion in order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "m3d/checkpoint.hpp"
#include "m3d/commands.hpp"
#include "m3d/condenser.hpp"
#include "m3d/encoder.hpp"
#include "m3d/evaluation.hpp"
#include "m3d/factor.hpp"
#include "m3d/kernels.hpp"
#include "m3d/mmd.hpp"

using namespace m3d;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

TensorD random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  return gaussian_draw<double>(rng, std::move(shape), 0.0, scale);
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ||a - b|| / max(||a||, ||b||, floor)
double rel_norm_error(const std::vector<double>& a, const std::vector<double>& b,
                      double floor = 1e-12) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

std::vector<double> values(const TensorD& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> coordinate_fd(const std::function<double()>& f, TensorD& x, double h) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    out[i] = (up - down) / (2 * h);
  }
  return out;
}

// Directional central difference of f along `dir` applied through `apply`.
// Returns false when two step sizes disagree (a ReLU kink inside the stencil).
bool directional_fd(const std::function<double()>& f,
                    const std::function<void(double)>& apply, double& out) {
  auto cd = [&](double h) {
    apply(h);
    const double up = f();
    apply(-2 * h);
    const double down = f();
    apply(h);
    return (up - down) / (2 * h);
  };
  const double a = cd(1e-5), b = cd(5e-6);
  out = a;
  return rel_error(a, b, 1e-8) < 1e-6;
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<KernelSpec> kernel_families(Rng& rng) {
  return {KernelSpec::gaussian(0.05 + rng.uniform()), KernelSpec::linear(),
          KernelSpec::polynomial(1.0, 2)};
}

fs::path data_root() {
  if (const char* env = std::getenv("M3D_DATA_ROOT")) return env;
  return M3D_TEST_DATA_ROOT;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "m3d_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- references

double ref_kernel(const KernelSpec& spec, const TensorD& a, std::size_t i, const TensorD& b,
                  std::size_t j) {
  const std::size_t p = a.cols();
  double d2 = 0, ip = 0;
  for (std::size_t k = 0; k < p; ++k) {
    const double x = a.at(i, k), y = b.at(j, k);
    d2 += (x - y) * (x - y);
    ip += x * y;
  }
  switch (spec.family) {
    case KernelFamily::gaussian:
      return std::exp(-spec.lambda * d2);
    case KernelFamily::linear:
      return ip;
    case KernelFamily::polynomial:
      return std::pow(ip + spec.c, spec.degree);
  }
  return 0;
}

double ref_mean_gram(const KernelSpec& spec, const TensorD& a, const TensorD& b, bool drop_diag) {
  double s = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      if (drop_diag && i == j) continue;
      s += ref_kernel(spec, a, i, b, j);
      ++count;
    }
  return s / double(count);
}

double ref_mmd2(const KernelSpec& spec, const TensorD& x, const TensorD& y, bool unbiased) {
  return ref_mean_gram(spec, x, x, unbiased) + ref_mean_gram(spec, y, y, unbiased) -
         2 * ref_mean_gram(spec, x, y, false);
}

double ref_moment_distance(const TensorD& x, const TensorD& y, int order) {
  auto moments = [&](const TensorD& t) {
    const std::size_t n = t.rows(), p = t.cols();
    std::vector<double> out(p);
    for (std::size_t j = 0; j < p; ++j) {
      double mean = 0;
      for (std::size_t i = 0; i < n; ++i) mean += t.at(i, j);
      mean /= double(n);
      double m2 = 0, m3 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = t.at(i, j) - mean;
        m2 += d * d;
        m3 += d * d * d;
      }
      m2 /= double(n);
      m3 /= double(n);
      out[j] = order == 1 ? mean : order == 2 ? m2 : m3 / std::pow(m2, 1.5);
    }
    return out;
  };
  const auto a = moments(x), b = moments(y);
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

// Greedy herding recomputing every candidate mean from scratch.
std::vector<std::size_t> ref_herding(const TensorD& f, const std::vector<std::size_t>& ids,
                                     std::size_t k) {
  const std::size_t p = f.cols();
  std::vector<double> mu(p, 0);
  for (const auto i : ids)
    for (std::size_t j = 0; j < p; ++j) mu[j] += f.at(i, j) / double(ids.size());
  std::vector<std::size_t> chosen;
  for (std::size_t t = 0; t < k; ++t) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (const auto i : ids) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double d = 0;
      for (std::size_t j = 0; j < p; ++j) {
        double m = f.at(i, j);
        for (const auto c : chosen) m += f.at(c, j);
        m /= double(chosen.size() + 1);
        d += (m - mu[j]) * (m - mu[j]);
      }
      if (d < best_d) best_d = d, best = i;
    }
    chosen.push_back(best);
  }
  return chosen;
}

// ---------------------------------------------------------------- desk scale

// MNIST, first 1000 examples per class; small random convnets sized for one CPU core.
RunConfig desk_config() {
  RunConfig cfg;
  const std::vector<std::pair<std::string, std::string>> entries = {
      {"dataset", "mnist"},     {"train_per_class", "1000"}, {"encoder", "convnet3"},
      {"encoder_width", "8"},   {"real_batch", "64"},        {"ipc", "10"},
      {"factor", "2"},          {"iterations", "2000"},      {"ipm", "5"},
      {"lr", "1"},              {"moment_interval", "0"},    {"eval_encoder", "convnet3"},
      {"eval_width", "32"},     {"eval_epochs", "300"},      {"eval_repeats", "5"},
      {"moment_encoders", "10"}};
  for (const auto& [k, v] : entries) cfg.set(k, v);
  cfg.set("data_root", data_root().string());
  return cfg;
}

bool mnist_present() { return fs::exists(data_root() / "mnist" / "train-images-idx3-ubyte"); }

Outcome missing_data() {
  return {false, "MNIST not found under " + data_root().string() +
                     " (set M3D_DATA_ROOT or run tools/fetch_mnist.sh)"};
}

SyntheticSet condense_with(const RunConfig& cfg, const LabeledDataset& train, LossMode mode) {
  const auto t0 = std::chrono::steady_clock::now();
  auto set = condense(train, cfg.condense_config(train), mode);
  std::cerr << "  condensed " << to_string(mode) << " seed " << cfg.get("seed") << " ipc "
            << cfg.get("ipc") << " in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            << " s\n";
  return set;
}

// ---------------------------------------------------------------- criteria

Outcome exactness() {
  Rng rng(101);
  double worst_dm = 0, worst_sym = 0, worst_self = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(40), m = 2 + rng.below(40), p = 1 + rng.below(16);
    const auto x = random_tensor(rng, {n, p}), y = random_tensor(rng, {m, p}, 1.5);
    const double a = mmd2_biased(KernelSpec::linear(), real_batch(x), synthetic_batch(y));
    const double b = dm_loss(real_batch(x), synthetic_batch(y));
    worst_dm = std::max(worst_dm, std::abs(a - b) / std::max(1.0, std::abs(b)));
    for (const auto& spec : kernel_families(rng)) {
      const double xy = mmd2_biased(spec, real_batch(x), synthetic_batch(y));
      const double yx = mmd2_biased(spec, real_batch(y), synthetic_batch(x));
      worst_sym = std::max(worst_sym, std::abs(xy - yx) / std::max(1.0, std::abs(xy)));
      worst_self = std::max(worst_self, std::abs(mmd2_biased(spec, real_batch(x),
                                                             synthetic_batch(x))));
    }
  }
  bool diag_ones = true;
  for (int t = 0; t < 100; ++t) {
    const auto x = random_tensor(rng, {1 + rng.below(30), 1 + rng.below(20)}, 3.0);
    const auto g = gram(KernelSpec::gaussian(0.01 + 5 * rng.uniform()), x, x);
    for (std::size_t i = 0; i < g.rows(); ++i) diag_ones &= g.at(i, i) == 1.0;
  }
  bool identity = true;
  for (int t = 0; t < 20; ++t) {
    const auto imgs = random_tensor(rng, {3, 2, 6, 4});
    identity &= factor_expand(imgs, 1, UpsampleMode::bilinear) == imgs;
    identity &= factor_expand(imgs, 1, UpsampleMode::nearest) == imgs;
  }
  SyntheticSet set;
  set.num_classes = 10;
  set.ipc = 3;
  set.factor = 2;
  set.images = random_tensor(rng, {30, 1, 28, 28}).cast<float>();
  set.stats = {{0.1307}, {0.3081}};
  set.arch = "convnet3:c1:h28:w28:width8:classes10";
  set.dataset = "mnist";
  set.seed = 7;
  set.iterations = 2000;
  std::stringstream first;
  write_checkpoint(first, set);
  std::stringstream in(first.str());
  const auto back = read_checkpoint(in);
  std::stringstream second;
  write_checkpoint(second, back);
  const bool bitwise = back == set && first.str() == second.str() &&
                       std::memcmp(back.images.ptr(), set.images.ptr(),
                                   set.images.size() * sizeof(float)) == 0;

  const bool pass = worst_dm <= 1e-12 && worst_sym <= 1e-12 && worst_self <= 1e-12 &&
                    diag_ones && identity && bitwise;
  return {pass, fmt("linear-vs-dm %.1e, symmetry %.1e, self %.1e (tol 1e-12); gram diag==1 %s; "
                    "l=1 identity %s; checkpoint bitwise %s",
                    worst_dm, worst_sym, worst_self, diag_ones ? "yes" : "no",
                    identity ? "yes" : "no", bitwise ? "yes" : "no")};
}

Outcome gradients() {
  Rng rng(202);
  // Kernel gradients w.r.t. the second argument.
  double kernel_worst = 0;
  int kernel_count = 0;
  for (int t = 0; t < 50; ++t)
    for (const auto& spec : kernel_families(rng)) {
      const std::size_t p = 1 + rng.below(8);
      auto a = random_tensor(rng, {1, p}), b = random_tensor(rng, {1, p});
      const auto g = kernel_grad_second<double>(spec, a.values(), b.values());
      const auto fd = coordinate_fd(
          [&] { return kernel_eval<double>(spec, a.values(), b.values()); }, b, 1e-6);
      kernel_worst = std::max(kernel_worst, rel_norm_error({g.begin(), g.end()}, fd));
      ++kernel_count;
    }
  // mmd2_grad_syn.
  double mmd_worst = 0;
  int mmd_count = 0;
  for (int t = 0; t < 50; ++t)
    for (const auto& spec : kernel_families(rng)) {
      const std::size_t p = 1 + rng.below(5);
      const auto x = random_tensor(rng, {2 + rng.below(7), p});
      auto y = random_tensor(rng, {2 + rng.below(5), p});
      const auto g = mmd2_grad_syn(spec, real_batch(x), synthetic_batch(y));
      const auto fd = coordinate_fd(
          [&] { return mmd2_biased(spec, real_batch(x), synthetic_batch(y)); }, y, 1e-6);
      mmd_worst = std::max(mmd_worst, rel_norm_error(values(g), fd));
      ++mmd_count;
    }
  // Encoder input and weight gradients: directional derivatives along random directions.
  double input_worst = 0, weight_worst = 0;
  int input_count = 0, weight_count = 0, kinks = 0;
  for (int t = 0; t < 60; ++t) {
    const auto arch = t % 2 == 0 ? EncoderArch::convnet3(2, 8, 8, 4, 3)
                                 : EncoderArch::mlp2(2, 3, 3, 6, 3);
    auto params = init_encoder<double>(arch, rng);
    for (auto& tensor : params.tensors)  // move norm/bias terms off their defaults
      for (auto& v : tensor.data()) v += 0.1 * rng.normal();
    auto x = random_tensor(rng, {3, arch.channels, arch.height, arch.width_px});
    const bool head = t % 3 == 0;
    auto fwd = forward(params, x, head);
    const auto probe = random_tensor(rng, fwd.output.shape());
    auto f = [&] { return dot(encode(params, x, head), probe); };
    const auto grads = backward(fwd.tape, probe, true, true);

    const auto dir = random_tensor(rng, x.shape());
    double fd = 0;
    if (directional_fd(f, [&](double h) {
          for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * dir[i];
        }, fd)) {
      input_worst = std::max(input_worst, rel_error(dot(grads.input, dir), fd, 1e-8));
      ++input_count;
    } else {
      ++kinks;
    }
    std::vector<TensorD> wdir;
    double analytic = 0;
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      if (!head && params.names[k].rfind("head.", 0) == 0) {
        wdir.emplace_back(params.tensors[k].shape());
        continue;
      }
      wdir.push_back(random_tensor(rng, params.tensors[k].shape()));
      analytic += dot(grads.params[k], wdir.back());
    }
    if (directional_fd(f, [&](double h) {
          for (std::size_t k = 0; k < params.tensors.size(); ++k)
            for (std::size_t i = 0; i < params.tensors[k].size(); ++i)
              params.tensors[k][i] += h * wdir[k][i];
        }, fd)) {
      weight_worst = std::max(weight_worst, rel_error(analytic, fd, 1e-8));
      ++weight_count;
    } else {
      ++kinks;
    }
  }
  // Full condensation loss through factor_expand, w.r.t. the stored images.
  double step_worst = 0;
  int step_count = 0;
  for (int t = 0; t < 60; ++t) {
    const auto arch = EncoderArch::convnet3(1, 8, 8, 4, 2);
    const auto enc = init_encoder<double>(arch, rng);
    const auto real = random_tensor(rng, {6, 1, 8, 8});
    auto syn = random_tensor(rng, {2, 1, 8, 8});
    CondenseConfig cfg;
    cfg.factor = 2;
    cfg.upsample = t % 2 ? UpsampleMode::nearest : UpsampleMode::bilinear;
    cfg.encoder = arch;
    const LossMode mode = t % 3 == 2 ? LossMode::dm : LossMode::m3d;
    const auto step = class_step(enc, real, syn, cfg, mode);
    const auto dir = random_tensor(rng, syn.shape());
    double fd = 0;
    if (directional_fd([&] { return class_step(enc, real, syn, cfg, mode).loss; },
                       [&](double h) {
                         for (std::size_t i = 0; i < syn.size(); ++i) syn[i] += h * dir[i];
                       },
                       fd)) {
      step_worst = std::max(step_worst, rel_error(dot(step.grad, dir), fd, 1e-8));
      ++step_count;
    } else {
      ++kinks;
    }
  }
  const bool pass = kernel_count >= 50 && mmd_count >= 50 && input_count >= 50 &&
                    weight_count >= 50 && step_count >= 50 && kernel_worst < 1e-5 &&
                    mmd_worst < 1e-5 && input_worst < 1e-4 && weight_worst < 1e-4 &&
                    step_worst < 1e-4;
  return {pass, fmt("worst rel err: kernel %.1e (n=%d), mmd %.1e (n=%d), encoder input %.1e "
                    "(n=%d), encoder weights %.1e (n=%d), condensation step %.1e (n=%d); "
                    "%d stencils skipped at ReLU kinks",
                    kernel_worst, kernel_count, mmd_worst, mmd_count, input_worst, input_count,
                    weight_worst, weight_count, step_worst, step_count, kinks)};
}

Outcome convergence() {
  const std::vector<std::size_t> sizes = {32, 128, 512, 2048};
  const std::size_t p = 4, seeds = 20;
  std::vector<double> log_n;
  for (const auto n : sizes) log_n.push_back(std::log(double(n)));
  const double mx = std::accumulate(log_n.begin(), log_n.end(), 0.0) / double(sizes.size());
  double slope_sum = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng = Rng::stream(s, Stream::diagnostic, {3});
    std::vector<double> log_mmd;
    for (const auto n : sizes) {
      const auto x = random_tensor(rng, {n, p}), y = random_tensor(rng, {n, p});
      const double v = mmd2_biased(KernelSpec::gaussian(1.0 / double(p)), real_batch(x),
                                   synthetic_batch(y));
      log_mmd.push_back(0.5 * std::log(v));
    }
    const double my = std::accumulate(log_mmd.begin(), log_mmd.end(), 0.0) / double(sizes.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      sxy += (log_n[i] - mx) * (log_mmd[i] - my);
      sxx += (log_n[i] - mx) * (log_n[i] - mx);
    }
    slope_sum += sxy / sxx;
  }
  const double slope = slope_sum / double(seeds);
  return {slope >= -0.75 && slope <= -0.25,
          fmt("mean log-log slope of MMD vs n over %zu seeds = %.3f (band [-0.75, -0.25])",
              seeds, slope)};
}

Outcome variance_sensitivity() {
  Rng rng(404);
  const std::size_t n = 512, p = 8;
  auto a = random_tensor(rng, {n, p});
  std::vector<double> mean(p, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += a.at(i, j) / double(n);
  TensorD b({n, p});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      a.at(i, j) -= mean[j];
      b.at(i, j) = 2.0 * a.at(i, j);  // equal means, variance ratio 4
    }
  const double lambda = median_bandwidth(a, TensorD({0, p}));
  const double mmd = mmd2_biased(KernelSpec::gaussian(lambda), real_batch(a), synthetic_batch(b));
  const double dm = dm_loss(real_batch(a), synthetic_batch(b));
  return {mmd > 1e-3 && dm < 1e-12,
          fmt("gaussian mmd2 %.4g (> 1e-3), dm loss %.2e (< 1e-12)", mmd, dm)};
}

Outcome moment_direction() {
  if (!mnist_present()) return missing_data();
  RunConfig cfg = desk_config();
  const auto data = load_datasets(cfg);
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.set("seed", std::to_string(seed));
    auto opts = cfg.moment_options();
    opts.seed = 1000 + seed;
    const auto arch = cfg.condense_arch(data.train);
    const auto m3d = moment_diagnostics(
        data.train, condense_with(cfg, data.train, LossMode::m3d), arch, opts);
    const auto dm = moment_diagnostics(
        data.train, condense_with(cfg, data.train, LossMode::dm), arch, opts);
    const bool win = m3d.distance[0] < dm.distance[0] && m3d.distance[1] < dm.distance[1] &&
                     m3d.distance[2] < dm.distance[2];
    wins += win;
    rows += fmt(" seed%llu m3d %.3g/%.3g/%.3g dm %.3g/%.3g/%.3g%s;",
                static_cast<unsigned long long>(seed), m3d.distance[0], m3d.distance[1],
                m3d.distance[2], dm.distance[0], dm.distance[1], dm.distance[2],
                win ? "" : " (not all smaller)");
    std::cerr << " " << rows.substr(rows.rfind(" seed")) << "\n";
  }
  return {wins >= 4, fmt("M3D smaller on all three orders for %d/5 seeds (need 4):", wins) + rows};
}

Outcome accuracy_direction() {
  if (!mnist_present()) return missing_data();
  RunConfig cfg = desk_config();
  const auto data = load_datasets(cfg);
  const auto arch = cfg.eval_arch(data.test);
  const auto tc = cfg.train_config();
  const auto m3d = evaluate_condensed(condense_with(cfg, data.train, LossMode::m3d), data.test,
                                      arch, tc);
  std::cerr << "  m3d accuracy " << m3d.mean << "\n";
  const auto dm = evaluate_condensed(condense_with(cfg, data.train, LossMode::dm), data.test,
                                     arch, tc);
  std::cerr << "  dm accuracy " << dm.mean << "\n";
  const double gap = 100 * (m3d.mean - dm.mean);
  return {gap >= 2.0, fmt("M3D %.2f +- %.2f%%, DM %.2f +- %.2f%% over %zu repeats; gap %.2f "
                          "points (need >= 2)",
                          100 * m3d.mean, 100 * m3d.std, 100 * dm.mean, 100 * dm.std,
                          m3d.accuracies.size(), gap)};
}

Outcome beats_selection() {
  if (!mnist_present()) return missing_data();
  RunConfig cfg = desk_config();
  cfg.set("ipc", "1");
  cfg.set("eval_repeats", "2");
  const auto data = load_datasets(cfg);
  const auto arch = cfg.eval_arch(data.test);

  // Herding features: penultimate layer of a classifier briefly trained on the subset.
  TrainConfig feat_cfg = cfg.train_config();
  feat_cfg.epochs = 5;
  Rng feat_rng = Rng::stream(0, Stream::selection, {99});
  const auto feature_net = train_classifier(data.train, arch, feat_cfg, feat_rng).params;
  const auto herded = select_herding(data.train, 1, feature_net);

  const std::size_t seeds = 5;
  double sum_m3d = 0, sum_random = 0, sum_herding = 0;
  int beat_random = 0, beat_herding = 0;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    cfg.set("seed", std::to_string(seed));
    cfg.set("eval_seed", std::to_string(seed));
    const auto tc = cfg.train_config();
    const double m3d =
        evaluate_condensed(condense_with(cfg, data.train, LossMode::m3d), data.test, arch, tc)
            .mean;
    Rng sel = Rng::stream(seed, Stream::selection);
    const double random =
        evaluate_dataset(select_random(data.train, 1, sel), data.test, arch, tc).mean;
    const double herding = evaluate_dataset(herded, data.test, arch, tc).mean;
    std::cerr << "  seed " << seed << ": m3d " << m3d << " random " << random << " herding "
              << herding << "\n";
    sum_m3d += m3d, sum_random += random, sum_herding += herding;
    beat_random += m3d > random;
    beat_herding += m3d > herding;
  }
  const double n = double(seeds);
  const bool pass = sum_m3d > sum_random && sum_m3d > sum_herding;
  return {pass, fmt("IPC=1 mean accuracy over %zu paired seeds: M3D %.2f%%, random %.2f%%, "
                    "herding %.2f%%; M3D wins %d/%zu vs random, %d/%zu vs herding",
                    seeds, 100 * sum_m3d / n, 100 * sum_random / n, 100 * sum_herding / n,
                    beat_random, seeds, beat_herding, seeds)};
}

Outcome kernel_robustness() {
  const auto dir = scratch("kernel_sweep");
  RunConfig cfg;
  const std::vector<std::pair<std::string, std::string>> entries = {
      {"dataset", "mixture"},   {"mixture_classes", "10"}, {"mixture_per_class", "200"},
      {"mixture_test_per_class", "500"}, {"encoder", "mlp2"}, {"encoder_width", "64"},
      {"eval_encoder", "mlp2"}, {"eval_width", "64"},     {"ipc", "4"},
      {"factor", "1"},          {"iterations", "500"},    {"real_batch", "64"},
      {"ablate_lr", "1,0.1,0.0003"}, {"eval_epochs", "100"},   {"eval_batch", "16"},
      {"eval_repeats", "3"},    {"ablate_axis", "kernel"}, {"ablate_seeds", "3"}};
  for (const auto& [k, v] : entries) cfg.set(k, v);
  cfg.set("out_dir", dir.string());
  std::ostringstream log;
  cmd_ablate(cfg, log);
  std::cerr << log.str();

  std::ifstream in(dir / "sweep.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  std::vector<double> sums;
  std::vector<int> counts;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    const auto it = std::find(names.begin(), names.end(), cols.at(1));
    const std::size_t k = std::size_t(it - names.begin());
    if (it == names.end()) names.push_back(cols[1]), sums.push_back(0), counts.push_back(0);
    sums[k] += std::stod(cols.at(4));
    counts[k] += 1;
  }
  std::string detail;
  double lo = 1, hi = 0;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double acc = sums[k] / counts[k];
    lo = std::min(lo, acc), hi = std::max(hi, acc);
    detail += fmt("%s %.2f%% ", names[k].c_str(), 100 * acc);
  }
  const double spread = 100 * (hi - lo);
  return {names.size() == 3 && spread <= 10.0,
          "toy mixture (10 classes, IPC=4, 3 paired seeds, lr 1/0.1/3e-4): " + detail +
              fmt("; spread %.2f points (need <= 10)", spread)};
}

Outcome oracles() {
  Rng rng(909);
  double worst_b = 0, worst_u = 0, worst_m = 0, worst_h = 0;
  bool herding_ids = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t p = 1 + rng.below(6);
    const auto x = random_tensor(rng, {2 + rng.below(9), p});
    const auto y = random_tensor(rng, {2 + rng.below(9), p}, 1.3);
    for (const auto& spec : kernel_families(rng)) {
      const double b = mmd2_biased(spec, real_batch(x), synthetic_batch(y));
      const double u = mmd2_unbiased(spec, real_batch(x), synthetic_batch(y));
      worst_b = std::max(worst_b, std::abs(b - ref_mmd2(spec, x, y, false)) /
                                      std::max(1.0, std::abs(b)));
      worst_u = std::max(worst_u, std::abs(u - ref_mmd2(spec, x, y, true)) /
                                      std::max(1.0, std::abs(u)));
    }
    for (int order = 1; order <= 3; ++order) {
      const double m = moment_distance(real_batch(x), synthetic_batch(y), order);
      worst_m = std::max(worst_m, std::abs(m - ref_moment_distance(x, y, order)) /
                                      std::max(1.0, std::abs(m)));
    }
    // Herding on a 3-class instance with random features.
    const std::size_t n = 18, fp = 1 + rng.below(5), ipc = 1 + rng.below(5);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = int(i % 3);
    for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
    const LabeledDataset ds(TensorD({n, 1, 1, 1}), labels, 3);
    const auto feats = random_tensor(rng, {n, fp});
    const auto order = herding_order(ds, feats, ipc);
    const auto selected = select_herding(ds, ipc, feats);
    std::vector<std::size_t> expected_ids;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto ref = ref_herding(feats, ds.class_indices(c), ipc);
      herding_ids &= ref == order[c];
      auto sorted = ref;
      std::sort(sorted.begin(), sorted.end());
      expected_ids.insert(expected_ids.end(), sorted.begin(), sorted.end());
      // Selected-mean distance to the class mean agrees with the reference.
      for (std::size_t j = 0; j < fp; ++j) {
        double a = 0, b = 0;
        for (const auto i : ref) a += feats.at(i, j) / double(ipc);
        for (const auto i : order[c]) b += feats.at(i, j) / double(ipc);
        worst_h = std::max(worst_h, std::abs(a - b));
      }
    }
    herding_ids &= selected.source_ids() == expected_ids;
  }
  const bool pass = worst_b <= 1e-12 && worst_u <= 1e-12 && worst_m <= 1e-12 &&
                    worst_h <= 1e-12 && herding_ids;
  return {pass, fmt("max deviation from brute force: mmd2_biased %.1e, mmd2_unbiased %.1e, "
                    "moment_distance %.1e, herding mean %.1e, herding ids %s (tol 1e-12)",
                    worst_b, worst_u, worst_m, worst_h, herding_ids ? "match" : "differ")};
}

struct Criterion {
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"exactness suite", 60, exactness},
    {"gradient suite", 300, gradients},
    {"MMD convergence rate", 120, convergence},
    {"moment-mismatch sensitivity", 60, variance_sensitivity},
    {"moment distances: M3D vs DM on MNIST", 1800, moment_direction},
    {"accuracy: M3D vs DM on MNIST", 3600, accuracy_direction},
    {"condensation beats selection at IPC=1", 1800, beats_selection},
    {"kernel-robustness ablation", 2700, kernel_robustness},
    {"oracle equivalence", 60, oracles},
};

bool run_one(int index) {
  const Criterion& c = kCriteria[index - 1];
  const std::clock_t cpu0 = std::clock();
  const auto wall0 = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    outcome = c.run();
  } catch (const std::exception& e) {
    outcome = {false, std::string("error: ") + e.what()};
  }
  const double cpu = double(std::clock() - cpu0) / CLOCKS_PER_SEC;
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  const bool in_budget = cpu <= c.budget_seconds;
  const bool pass = outcome.pass && in_budget;
  std::printf("%s criterion %d (%s): %s [cpu %.1f s, wall %.1f s, budget %.0f s%s]\n",
              pass ? "PASS" : "FAIL", index, c.name, outcome.detail.c_str(), cpu, wall,
              c.budget_seconds, in_budget ? "" : ", OVER BUDGET");
  std::fflush(stdout);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1-9|all>\n");
    return 2;
  }
  const std::string which = argv[1];
  if (which == "all") {
    bool ok = true;
    for (int i = 1; i <= 9; ++i) ok &= run_one(i);
    return ok ? 0 : 1;
  }
  const int index = std::atoi(which.c_str());
  if (index < 1 || index > 9) {
    std::fprintf(stderr, "criterion must be 1-9 or all\n");
    return 2;
  }
  return run_one(index) ? 0 : 1;
}
