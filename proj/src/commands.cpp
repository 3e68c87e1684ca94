#include "m3d/commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace m3d {

int exit_code_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return exit_failure;
  switch (err->kind()) {
    case ErrorKind::config:
    case ErrorKind::shape:
      return exit_config;
    case ErrorKind::io:
    case ErrorKind::format:
      return exit_io;
    case ErrorKind::numeric:
      return exit_numeric;
    case ErrorKind::state:
      return exit_failure;
  }
  return exit_failure;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

LabeledDataset load_split(const RunConfig& config, bool train) {
  const std::string name = config.get("dataset");
  const auto root = config.data_root();
  LoadOptions options;
  options.per_class_limit = config.get_size(train ? "train_per_class" : "test_per_class");
  if (name == "mnist" || name == "fashion") {
    const std::string prefix = train ? "train" : "t10k";
    auto ds = load_idx(root / name / (prefix + "-images-idx3-ubyte"),
                       root / name / (prefix + "-labels-idx1-ubyte"), options);
    return LabeledDataset(ds.images(), ds.labels(), ds.num_classes(), name);
  }
  if (name == "cifar10") {
    std::vector<std::filesystem::path> files;
    if (train) {
      for (int i = 1; i <= 5; ++i)
        files.push_back(root / "cifar10" / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
      files.push_back(root / "cifar10" / "test_batch.bin");
    }
    return load_cifar_binary(files, options);
  }
  if (name == "mixture") {
    Rng rng = Rng::stream(config.get_u64("mixture_seed"), Stream::mixture, {train ? 0u : 1u});
    const auto spec = toy_mixture_spec(config.get_size("mixture_classes"));
    auto ds = gen_mixture(spec, config.get_size(train ? "mixture_per_class"
                                                       : "mixture_test_per_class"),
                          rng);
    return options.per_class_limit ? ds.first_per_class(options.per_class_limit) : ds;
  }
  throw ConfigError("unknown dataset '" + name + "'");
}

void check_set_matches(const SyntheticSet& set, const LabeledDataset& data) {
  if (set.num_classes != data.num_classes() || set.images.dim(1) != data.channels() ||
      set.images.dim(2) != data.height() || set.images.dim(3) != data.width())
    throw ConfigError("checkpoint (" + set.dataset + ", " + shape_string(set.images.shape()) +
                      ") does not match dataset " + data.name());
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  auto out = open_csv(path);
  out << "row,repeat,accuracy,mean,std,seconds\n";
  for (std::size_t r = 0; r < report.accuracies.size(); ++r)
    out << "repeat," << r << "," << report.accuracies[r] << ",,,\n";
  out << "aggregate,," << "," << report.mean << "," << report.std << "," << report.seconds
      << "\n";
}

}  // namespace

Datasets load_datasets(const RunConfig& config) {
  LabeledDataset train = normalize(load_split(config, true), StatsMode::compute);
  LabeledDataset test = normalize(load_split(config, false), StatsMode::supplied, train.stats());
  return {std::move(train), std::move(test)};
}

void echo_config(const RunConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir(), ec);
  if (ec) throw IoError("cannot create " + config.out_dir().string() + ": " + ec.message());
  std::ofstream out(config.out_dir() / "config.txt");
  if (!out) throw IoError("cannot write config echo");
  out << config.to_text();
}

SyntheticSet cmd_condense(const RunConfig& config, std::ostream& log) {
  echo_config(config);
  const LossMode mode = parse_loss_mode(config.get("loss"));
  const Datasets data = load_datasets(config);
  const CondenseConfig cc = config.condense_config(data.train);
  auto metrics = open_csv(config.out_dir() / "metrics.csv");
  metrics << "iteration,class,loss,lambda,moment1,moment2,moment3,seconds\n";
  const std::size_t report_every = std::max<std::size_t>(1, cc.iterations / 20);
  auto sink = [&](const CondenseEvent& ev) {
    metrics << ev.iteration << "," << ev.cls << "," << ev.loss << "," << ev.lambda << ",";
    if (ev.moments)
      metrics << ev.moments->distance[0] << "," << ev.moments->distance[1] << ","
              << ev.moments->distance[2];
    else
      metrics << ",,";
    metrics << "," << ev.seconds << "\n";
    if (ev.cls + 1 == data.train.num_classes() && ev.iteration % report_every == 0)
      log << "iteration " << ev.iteration << " loss " << ev.loss << " (" << ev.seconds
          << " s)\n";
  };
  const SyntheticSet set = condense(data.train, cc, mode, sink);
  save_checkpoint(config.checkpoint_path(), set);
  log << "wrote " << config.checkpoint_path().string() << "\n";
  return set;
}

EvalReport cmd_eval(const RunConfig& config, std::ostream& log) {
  echo_config(config);
  const SyntheticSet set = load_checkpoint(config.checkpoint_path());
  const Datasets data = load_datasets(config);
  check_set_matches(set, data.test);
  const EvalReport report =
      evaluate_condensed(set, data.test, config.eval_arch(data.test), config.train_config());
  write_report(config.out_dir() / "report.csv", report);
  log << "accuracy " << report.mean << " +- " << report.std << " over "
      << report.accuracies.size() << " repeats\n";
  return report;
}

MomentReport cmd_moments(const RunConfig& config, std::ostream& log) {
  echo_config(config);
  const SyntheticSet set = load_checkpoint(config.checkpoint_path());
  const Datasets data = load_datasets(config);
  check_set_matches(set, data.train);
  const auto options = config.moment_options();
  const MomentReport m =
      moment_diagnostics(data.train, set, config.condense_arch(data.train), options);
  auto out = open_csv(config.out_dir() / "moments.csv");
  out << "encoders,order1,order2,order3\n"
      << options.encoders << "," << m.distance[0] << "," << m.distance[1] << ","
      << m.distance[2] << "\n";
  log << "moments " << m.distance[0] << " " << m.distance[1] << " " << m.distance[2] << "\n";
  return m;
}

void cmd_ablate(const RunConfig& config, std::ostream& log) {
  echo_config(config);
  const std::string axis = config.get("ablate_axis");
  std::vector<std::string> values;
  if (axis == "kernel")
    values = {"gaussian", "linear", "polynomial"};
  else if (axis == "ipm")
    values = config.get_list("ablate_ipm");
  else
    throw ConfigError("unknown ablation axis '" + axis + "'");
  if (values.empty()) throw ConfigError("ablation axis has no values");
  const auto rates = config.get_list("ablate_lr");
  if (!rates.empty() && rates.size() != values.size())
    throw ConfigError("ablate_lr needs one rate per axis value");
  const std::size_t seeds = config.get_size("ablate_seeds");
  if (seeds == 0) throw ConfigError("ablate_seeds must be >= 1");
  const LossMode mode = parse_loss_mode(config.get("loss"));
  const Datasets data = load_datasets(config);

  auto out = open_csv(config.out_dir() / "sweep.csv");
  out << "axis,value,seed,lr,accuracy_mean,accuracy_std,condense_seconds,eval_seconds\n";
  for (std::size_t v = 0; v < values.size(); ++v) {
    const std::string& value = values[v];
    RunConfig cell = config;
    cell.set(axis == "kernel" ? "kernel" : "ipm", value);
    if (!rates.empty()) cell.set("lr", rates[v]);
    for (std::size_t s = 0; s < seeds; ++s) {
      cell.set("seed", std::to_string(config.get_u64("seed") + s));
      cell.set("eval_seed", std::to_string(config.get_u64("eval_seed") + s));
      const CondenseConfig cc = cell.condense_config(data.train);
      const auto t0 = std::chrono::steady_clock::now();
      const SyntheticSet set = condense(data.train, cc, mode);
      const double condense_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const EvalReport r = evaluate_condensed(set, data.test, cell.eval_arch(data.test),
                                              cell.train_config());
      out << axis << "," << value << "," << cc.seed << "," << cc.learning_rate << "," << r.mean << "," << r.std << ","
          << condense_s << "," << r.seconds << "\n";
      log << axis << "=" << value << " seed " << cc.seed << ": " << r.mean << "\n";
    }
  }
}

std::vector<std::filesystem::path> cmd_export_images(const RunConfig& config,
                                                     std::ostream& log) {
  echo_config(config);
  const SyntheticSet set = load_checkpoint(config.checkpoint_path());
  auto files = export_images(set, config.out_dir() / "images");
  log << "wrote " << files.size() << " images to " << (config.out_dir() / "images").string()
      << "\n";
  return files;
}

}  // namespace m3d
