#include "m3d/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace m3d {

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"dataset", "mnist"},            // mnist | fashion | cifar10 | mixture
      {"data_root", ""},
      {"train_per_class", "0"},        // 0 keeps every training example
      {"test_per_class", "0"},
      {"out_dir", "runs/latest"},
      {"checkpoint", ""},              // default <out_dir>/synthetic.ckpt
      {"loss", "m3d"},
      {"kernel", "gaussian"},
      {"kernel_lambda", "median"},
      {"poly_c", "1"},
      {"poly_degree", "2"},
      {"ipc", "10"},
      {"factor", "2"},
      {"upsample", "bilinear"},
      {"iterations", "2000"},
      {"ipm", "5"},
      {"lr", "1"},
      {"real_batch", "256"},
      {"init", "real"},
      {"precision", "f32"},
      {"encoder", "convnet3"},
      {"encoder_width", "128"},
      {"seed", "0"},
      {"moment_interval", "100"},
      {"eval_encoder", "convnet3"},
      {"eval_width", "128"},
      {"eval_epochs", "300"},
      {"eval_batch", "64"},
      {"eval_lr", "0.01"},
      {"eval_decay", "0.2"},
      {"eval_momentum", "0.9"},
      {"eval_weight_decay", "0.0005"},
      {"eval_repeats", "5"},
      {"eval_seed", "0"},
      {"moment_encoders", "10"},
      {"moment_real_limit", "0"},
      {"moment_seed", "0"},
      {"ablate_axis", "kernel"},       // kernel | ipm
      {"ablate_ipm", "1,5,10"},
      {"ablate_seeds", "1"},
      {"ablate_lr", ""},               // optional per-value learning rates
      {"mixture_classes", "2"},
      {"mixture_per_class", "200"},
      {"mixture_test_per_class", "500"},
      {"mixture_seed", "0"},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

EncoderArch make_arch(const std::string& kind, std::size_t width, const LabeledDataset& data) {
  if (kind == "convnet3")
    return EncoderArch::convnet3(data.channels(), data.height(), data.width(), width,
                                 data.num_classes());
  if (kind == "mlp2")
    return EncoderArch::mlp2(data.channels(), data.height(), data.width(), width,
                             data.num_classes());
  throw ConfigError("unknown encoder '" + kind + "'");
}

}  // namespace

RunConfig::RunConfig() : entries_(defaults()) {}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + " lacks '='");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

const std::string& RunConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw ConfigError("unknown config key '" + key + "'");
}

bool RunConfig::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == key; });
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& text = get(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError(key + " must be a non-negative integer, got '" + text + "'");
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& text = get(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError(key + " must be a number, got '" + text + "'");
  return v;
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream is(get(key));
  std::string token;
  while (std::getline(is, token, ','))
    if (!trim(token).empty()) out.push_back(trim(token));
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::filesystem::path RunConfig::data_root() const {
  if (!get("data_root").empty()) return get("data_root");
  if (const char* env = std::getenv("M3D_DATA_ROOT"); env && *env) return env;
  return "data";
}

std::filesystem::path RunConfig::out_dir() const { return get("out_dir"); }

std::filesystem::path RunConfig::checkpoint_path() const {
  if (!get("checkpoint").empty()) return get("checkpoint");
  return out_dir() / "synthetic.ckpt";
}

KernelSpec RunConfig::kernel_spec() const {
  KernelSpec spec;
  switch (parse_kernel_family(get("kernel"))) {
    case KernelFamily::gaussian:
      spec = KernelSpec::gaussian(get("kernel_lambda") == "median" ? 1.0
                                                                   : get_double("kernel_lambda"));
      break;
    case KernelFamily::linear:
      spec = KernelSpec::linear();
      break;
    case KernelFamily::polynomial:
      spec = KernelSpec::polynomial(get_double("poly_c"),
                                    static_cast<int>(get_size("poly_degree")));
      break;
  }
  spec.validate();
  return spec;
}

EncoderArch RunConfig::condense_arch(const LabeledDataset& data) const {
  return make_arch(get("encoder"), get_size("encoder_width"), data);
}

EncoderArch RunConfig::eval_arch(const LabeledDataset& data) const {
  return make_arch(get("eval_encoder"), get_size("eval_width"), data);
}

CondenseConfig RunConfig::condense_config(const LabeledDataset& data) const {
  CondenseConfig c;
  c.iterations = get_size("iterations");
  c.iterations_per_model = get_size("ipm");
  c.learning_rate = get_double("lr");
  c.real_batch = get_size("real_batch");
  c.ipc = get_size("ipc");
  c.factor = get_size("factor");
  c.upsample = parse_upsample_mode(get("upsample"));
  c.kernel = kernel_spec();
  c.median_bandwidth = get("kernel_lambda") == "median";
  c.encoder = condense_arch(data);
  c.seed = get_u64("seed");
  c.init = parse_init_mode(get("init"));
  c.precision = parse_precision(get("precision"));
  c.moment_interval = get_size("moment_interval");
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = get_size("eval_epochs");
  t.batch_size = get_size("eval_batch");
  t.learning_rate = get_double("eval_lr");
  t.decay = get_double("eval_decay");
  t.momentum = get_double("eval_momentum");
  t.weight_decay = get_double("eval_weight_decay");
  t.repeats = get_size("eval_repeats");
  t.seed = get_u64("eval_seed");
  t.validate();
  return t;
}

MomentDiagnostics RunConfig::moment_options() const {
  MomentDiagnostics m;
  m.encoders = get_size("moment_encoders");
  m.real_limit = get_size("moment_real_limit");
  m.seed = get_u64("moment_seed");
  return m;
}

}  // namespace m3d
