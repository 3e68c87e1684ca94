#pragma once

#include <filesystem>
#include <vector>

#include "m3d/condenser.hpp"

namespace m3d {

// 8-bit image in binary PGM (1 channel) or PPM (3 channels).
struct Image8 {
  std::size_t channels = 1, height = 0, width = 0;
  std::vector<unsigned char> pixels;  // interleaved, row-major
};

// De-normalizes with the set's stats, clamps to [0, 1] and rounds to 8 bits.
// Image j of the set maps to C x h x w channel-major input.
Image8 to_image8(const TensorF& images, std::size_t index, const NormalizationStats& stats);

void write_pnm(const std::filesystem::path& path, const Image8& image);
Image8 read_pnm(const std::filesystem::path& path);

// Writes class{c}_{k}.p?m for every stored image plus grid.p?m (one row per
// class). Returns the written paths, grid last.
std::vector<std::filesystem::path> export_images(const SyntheticSet& set,
                                                 const std::filesystem::path& dir);

}  // namespace m3d
