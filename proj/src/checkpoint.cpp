#include "m3d/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace m3d {

namespace {

constexpr const char* kFormatName = "m3d-synthetic";

std::string join(const std::vector<double>& values) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::istringstream is(text);
  std::string token;
  while (std::getline(is, token, ',')) out.push_back(token);
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError(FormatIssue::bad_header, "checkpoint field " + key + " is not an integer");
  return v;
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split(text)) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw FormatError(FormatIssue::bad_header, "checkpoint field " + key + " is not numeric");
    out.push_back(v);
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const SyntheticSet& set) {
  set.validate();
  const auto& shape = set.images.shape();
  std::ostringstream shape_text;
  for (std::size_t i = 0; i < shape.size(); ++i) shape_text << (i ? "," : "") << shape[i];
  out << "format=" << kFormatName << "\n"
      << "version=" << kCheckpointVersion << "\n"
      << "arch=" << set.arch << "\n"
      << "dataset=" << set.dataset << "\n"
      << "classes=" << set.num_classes << "\n"
      << "ipc=" << set.ipc << "\n"
      << "factor=" << set.factor << "\n"
      << "upsample=" << to_string(set.upsample) << "\n"
      << "shape=" << shape_text.str() << "\n"
      << "mean=" << join(set.stats.mean) << "\n"
      << "std=" << join(set.stats.std) << "\n"
      << "seed=" << set.seed << "\n"
      << "iterations=" << set.iterations << "\n"
      << "payload_bytes=" << set.images.size() * 4 << "\n"
      << "---\n";
  std::vector<char> payload(set.images.size() * 4);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(set.images[i]);
    for (int b = 0; b < 4; ++b) payload[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing checkpoint");
}

SyntheticSet read_checkpoint(std::istream& in) {
  std::map<std::string, std::string> header;
  std::string line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == "---") {
      terminated = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(FormatIssue::bad_header, "malformed checkpoint header line '" + line + "'");
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!terminated) throw FormatError(FormatIssue::truncated, "checkpoint header not terminated");
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end())
      throw FormatError(FormatIssue::bad_header, "checkpoint header lacks '" + key + "'");
    return it->second;
  };
  if (field("format") != kFormatName)
    throw FormatError(FormatIssue::bad_magic, "not an m3d synthetic-set checkpoint");
  if (field("version") != std::to_string(kCheckpointVersion))
    throw FormatError(FormatIssue::version, "checkpoint version " + field("version") +
                                                " unsupported (expected " +
                                                std::to_string(kCheckpointVersion) + ")");
  SyntheticSet set;
  set.arch = field("arch");
  set.dataset = field("dataset");
  set.num_classes = to_u64("classes", field("classes"));
  set.ipc = to_u64("ipc", field("ipc"));
  set.factor = to_u64("factor", field("factor"));
  try {
    set.upsample = parse_upsample_mode(field("upsample"));
  } catch (const ConfigError& e) {
    throw FormatError(FormatIssue::bad_header, e.what());
  }
  Shape shape;
  for (const auto& s : split(field("shape"))) shape.push_back(to_u64("shape", s));
  set.stats.mean = to_doubles("mean", field("mean"));
  set.stats.std = to_doubles("std", field("std"));
  set.seed = to_u64("seed", field("seed"));
  set.iterations = to_u64("iterations", field("iterations"));
  const std::size_t bytes = to_u64("payload_bytes", field("payload_bytes"));
  if (bytes != shape_size(shape) * 4)
    throw FormatError(FormatIssue::count_mismatch, "checkpoint payload size disagrees with shape");

  std::vector<char> payload(bytes);
  in.read(payload.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes)
    throw FormatError(FormatIssue::truncated, "checkpoint payload truncated");
  std::vector<float> values(bytes / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= std::uint32_t{static_cast<unsigned char>(payload[i * 4 + b])} << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  set.images = TensorF(shape, std::move(values));
  try {
    set.validate();
  } catch (const ShapeError& e) {
    throw FormatError(FormatIssue::bad_header, std::string("inconsistent checkpoint: ") + e.what());
  }
  return set;
}

void save_checkpoint(const std::filesystem::path& path, const SyntheticSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, set);
}

SyntheticSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace m3d
