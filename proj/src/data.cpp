#include "m3d/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace m3d {

LabeledDataset::LabeledDataset(TensorD images, std::vector<int> labels,
                               std::size_t num_classes, std::string name)
    : images_(std::move(images)), labels_(std::move(labels)), name_(std::move(name)) {
  if (images_.rank() != 4) throw ShapeError("dataset images must be n x C x H x W");
  if (images_.dim(0) != labels_.size())
    throw ShapeError("dataset has " + std::to_string(images_.dim(0)) +
                     " images but " + std::to_string(labels_.size()) + " labels");
  class_index_.resize(num_classes);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int y = labels_[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw ShapeError("label " + std::to_string(y) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    class_index_[static_cast<std::size_t>(y)].push_back(i);
  }
}

void LabeledDataset::set_source_ids(std::vector<std::size_t> ids) {
  if (ids.size() != size()) throw ShapeError("source id count mismatch");
  source_ids_ = std::move(ids);
}

TensorD LabeledDataset::gather(std::span<const std::size_t> ids) const {
  const std::size_t per = images_.slice_size();
  TensorD out({ids.size(), channels(), height(), width()});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= size()) throw ShapeError("example id out of range");
    const auto src = images_.slice(ids[k]);
    std::copy(src.begin(), src.end(), out.ptr() + k * per);
  }
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> ids) const {
  std::vector<int> labels;
  labels.reserve(ids.size());
  std::vector<std::size_t> sources;
  sources.reserve(ids.size());
  for (const auto id : ids) {
    labels.push_back(labels_.at(id));
    sources.push_back(source_ids_.empty() ? id : source_ids_[id]);
  }
  LabeledDataset out(gather(ids), std::move(labels), num_classes(), name_);
  out.stats_ = stats_;
  out.source_ids_ = std::move(sources);
  return out;
}

LabeledDataset LabeledDataset::first_per_class(std::size_t k) const {
  std::vector<std::size_t> keep;
  std::vector<std::size_t> taken(num_classes(), 0);
  for (std::size_t i = 0; i < size(); ++i) {
    auto& t = taken[static_cast<std::size_t>(labels_[i])];
    if (t < k) {
      keep.push_back(i);
      ++t;
    }
  }
  return subset(keep);
}

// ---------------------------------------------------------------- loaders

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size())
    throw FormatError(FormatIssue::truncated, path.string() + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

LabeledDataset apply_limit(LabeledDataset ds, const LoadOptions& options) {
  if (options.per_class_limit == 0) return ds;
  return ds.first_per_class(options.per_class_limit);
}

std::size_t class_count(const std::vector<int>& labels, std::size_t at_least) {
  int top = -1;
  for (const int y : labels) top = std::max(top, y);
  return std::max(at_least, static_cast<std::size_t>(top + 1));
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        const LoadOptions& options) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (read_be32(img, 0, images_path) != kIdxImageMagic)
    throw FormatError(FormatIssue::bad_magic, images_path.string() + ": bad IDX image magic");
  if (read_be32(lab, 0, labels_path) != kIdxLabelMagic)
    throw FormatError(FormatIssue::bad_magic, labels_path.string() + ": bad IDX label magic");
  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t label_count = read_be32(lab, 4, labels_path);
  if (count != label_count)
    throw FormatError(FormatIssue::count_mismatch,
                      "IDX image count " + std::to_string(count) +
                          " != label count " + std::to_string(label_count));
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + count * pixels)
    throw FormatError(FormatIssue::truncated, images_path.string() + ": truncated pixel data");
  if (lab.size() < 8 + count)
    throw FormatError(FormatIssue::truncated, labels_path.string() + ": truncated label data");

  TensorD images({count, 1, rows, cols});
  for (std::size_t i = 0; i < count * pixels; ++i) images[i] = img[16 + i] / 255.0;
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = lab[8 + i];
  const std::size_t classes = class_count(labels, 10);
  return apply_limit(LabeledDataset(std::move(images), std::move(labels), classes,
                                    images_path.filename().string()),
                     options);
}

LabeledDataset load_cifar_binary(const std::vector<std::filesystem::path>& paths,
                                 const LoadOptions& options) {
  std::vector<double> pixels;
  std::vector<int> labels;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % kCifarRecord != 0)
      throw FormatError(FormatIssue::bad_length,
                        path.string() + ": length " + std::to_string(bytes.size()) +
                            " is not a multiple of 3073");
    const std::size_t records = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < records; ++r) {
      const unsigned char* rec = bytes.data() + r * kCifarRecord;
      if (rec[0] > 9)
        throw FormatError(FormatIssue::bad_header, path.string() + ": label byte > 9");
      labels.push_back(rec[0]);
      for (std::size_t i = 1; i < kCifarRecord; ++i) pixels.push_back(rec[i] / 255.0);
    }
  }
  const std::size_t n = labels.size();
  return apply_limit(LabeledDataset(TensorD({n, 3, 32, 32}, std::move(pixels)),
                                    std::move(labels), 10, "cifar10"),
                     options);
}

// ---------------------------------------------------------------- mixture

void MixtureSpec::validate() const {
  if (means.empty()) throw ConfigError("mixture needs at least one class");
  if (variances.size() != means.size())
    throw ConfigError("mixture needs one variance vector per class");
  const std::size_t dim = shape_size(image_shape);
  if (image_shape.size() != 3) throw ConfigError("mixture image shape must be C x H x W");
  for (std::size_t c = 0; c < means.size(); ++c) {
    if (means[c].size() != dim || variances[c].size() != dim)
      throw ConfigError("mixture class " + std::to_string(c) +
                        " does not match image shape " + shape_string(image_shape));
    for (const double v : variances[c])
      if (!(v >= 0.0)) throw ConfigError("mixture variances must be non-negative");
  }
}

LabeledDataset gen_mixture(const MixtureSpec& spec, std::size_t per_class, Rng& rng) {
  spec.validate();
  const std::size_t classes = spec.means.size();
  const std::size_t dim = shape_size(spec.image_shape);
  TensorD images({classes * per_class, spec.image_shape[0], spec.image_shape[1],
                  spec.image_shape[2]});
  std::vector<int> labels;
  labels.reserve(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      double* out = images.ptr() + (c * per_class + k) * dim;
      for (std::size_t j = 0; j < dim; ++j)
        out[j] = spec.means[c][j] + std::sqrt(spec.variances[c][j]) * rng.normal();
      labels.push_back(static_cast<int>(c));
    }
  }
  return LabeledDataset(std::move(images), std::move(labels), classes, "mixture");
}

MixtureSpec toy_mixture_spec(std::size_t classes, double radius) {
  if (classes == 0) throw ConfigError("mixture needs at least one class");
  constexpr std::size_t kSide = 4;
  constexpr double kPi = 3.14159265358979323846;
  MixtureSpec spec;
  spec.image_shape = {1, kSide, kSide};
  for (std::size_t c = 0; c < classes; ++c) {
    const double angle = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(classes);
    const double u = radius * std::cos(angle), v = radius * std::sin(angle);
    std::vector<double> mean(kSide * kSide);
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 0; x < kSide; ++x)
        mean[y * kSide + x] = (x < kSide / 2 ? u : -u) + (y < kSide / 2 ? v : -v) * 0.5;
    spec.means.push_back(std::move(mean));
    spec.variances.emplace_back(kSide * kSide, c % 2 == 0 ? 0.5 : 1.0);
  }
  return spec;
}

// ---------------------------------------------------------------- normalization

NormalizationStats compute_stats(const TensorD& images) {
  const std::size_t n = images.dim(0), channels = images.dim(1),
                    plane = images.dim(2) * images.dim(3);
  NormalizationStats stats;
  stats.mean.assign(channels, 0.0);
  stats.std.assign(channels, 0.0);
  const double count = static_cast<double>(n * plane);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = images.ptr() + (i * channels + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) sum += p[j];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = images.ptr() + (i * channels + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    stats.mean[c] = mean;
    stats.std[c] = std::sqrt(sq / count);
  }
  return stats;
}

LabeledDataset normalize(const LabeledDataset& dataset, StatsMode mode,
                         const NormalizationStats& supplied) {
  const NormalizationStats stats =
      mode == StatsMode::compute ? compute_stats(dataset.images()) : supplied;
  const std::size_t channels = dataset.channels();
  if (stats.mean.size() != channels || stats.std.size() != channels)
    throw ConfigError("normalization stats have " + std::to_string(stats.mean.size()) +
                      " channels, dataset has " + std::to_string(channels));
  for (std::size_t c = 0; c < channels; ++c)
    if (!(stats.std[c] > 0.0))
      throw NumericError("channel " + std::to_string(c) + " has zero standard deviation");
  TensorD images = dataset.images();
  const std::size_t plane = dataset.height() * dataset.width();
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = images.ptr() + (i * channels + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - stats.mean[c]) / stats.std[c];
    }
  LabeledDataset out(std::move(images), dataset.labels(), dataset.num_classes(),
                     dataset.name());
  out.set_stats(stats);
  if (!dataset.source_ids().empty()) out.set_source_ids(dataset.source_ids());
  return out;
}

TensorD denormalize(const TensorD& images, const NormalizationStats& stats) {
  if (stats.empty()) return images;
  const std::size_t channels = images.dim(1), plane = images.dim(2) * images.dim(3);
  if (stats.mean.size() != channels) throw ShapeError("stats channel mismatch");
  TensorD out = images;
  for (std::size_t i = 0; i < images.dim(0); ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = out.ptr() + (i * channels + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] = p[j] * stats.std[c] + stats.mean[c];
    }
  return out;
}

}  // namespace m3d
