#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m3d/rng.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

// Per-channel affine normalization x' = (x - mean) / std.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const { return mean.empty(); }
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

// n x C x H x W images with labels in [0, num_classes). The class index is a
// partition of [0, n). source_ids records, for subsets, the position of each
// example in the dataset it was drawn from.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(TensorD images, std::vector<int> labels, std::size_t num_classes,
                 std::string name = {});

  const TensorD& images() const noexcept { return images_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return class_index_.size(); }
  std::size_t channels() const { return images_.dim(1); }
  std::size_t height() const { return images_.dim(2); }
  std::size_t width() const { return images_.dim(3); }
  const std::string& name() const noexcept { return name_; }

  const std::vector<std::size_t>& class_indices(std::size_t c) const {
    return class_index_.at(c);
  }

  // Stats applied to the pixels, empty when the images are raw.
  const NormalizationStats& stats() const noexcept { return stats_; }
  void set_stats(NormalizationStats stats) { stats_ = std::move(stats); }

  const std::vector<std::size_t>& source_ids() const noexcept { return source_ids_; }
  void set_source_ids(std::vector<std::size_t> ids);

  // Copies the listed examples into a k x C x H x W tensor.
  TensorD gather(std::span<const std::size_t> ids) const;

  LabeledDataset subset(std::span<const std::size_t> ids) const;
  // First k examples of every class, in file order (desk-scale subsetting).
  LabeledDataset first_per_class(std::size_t k) const;

 private:
  TensorD images_;
  std::vector<int> labels_;
  std::vector<std::vector<std::size_t>> class_index_;
  std::string name_;
  NormalizationStats stats_;
  std::vector<std::size_t> source_ids_;
};

struct LoadOptions {
  // Keep at most this many examples per class (0 keeps everything).
  std::size_t per_class_limit = 0;
};

// IDX image/label pair (MNIST, Fashion-MNIST). Big-endian headers with
// magics 0x00000803 / 0x00000801; pixels scaled to [0, 1].
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        const LoadOptions& options = {});

// CIFAR-10 binary batches: 3073-byte records, one label byte followed by a
// 3 x 32 x 32 channel-major image. Files are concatenated in order.
LabeledDataset load_cifar_binary(const std::vector<std::filesystem::path>& paths,
                                 const LoadOptions& options = {});

// Class-conditional diagonal Gaussians reshaped to images.
struct MixtureSpec {
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> variances;
  Shape image_shape;  // C x H x W with C*H*W == mean length

  void validate() const;
};

LabeledDataset gen_mixture(const MixtureSpec& spec, std::size_t per_class, Rng& rng);

// Toy task: 1 x 4 x 4 images whose pixels are a fixed linear embedding of
// 2-D class means placed on a circle of radius `radius`; odd classes have
// twice the per-pixel variance of even ones.
MixtureSpec toy_mixture_spec(std::size_t classes, double radius = 2.0);

enum class StatsMode { compute, supplied };

// Per-channel normalization. compute derives population mean/std from the
// dataset itself; supplied uses `stats`. Throws NumericError on a zero std.
LabeledDataset normalize(const LabeledDataset& dataset, StatsMode mode,
                         const NormalizationStats& stats = {});

NormalizationStats compute_stats(const TensorD& images);

// Maps normalized pixels back to raw space.
TensorD denormalize(const TensorD& images, const NormalizationStats& stats);

}  // namespace m3d
