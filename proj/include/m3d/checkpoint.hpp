#pragma once

#include <filesystem>
#include <iosfwd>

#include "m3d/condenser.hpp"

namespace m3d {

inline constexpr int kCheckpointVersion = 1;

// Plain-text header of key=value lines, a "---" line, then the images as
// raw little-endian f32 in tensor order. Header keys: format, version, arch,
// dataset, classes, ipc, factor, upsample, shape, mean, std, seed,
// iterations, payload_bytes.
void write_checkpoint(std::ostream& out, const SyntheticSet& set);
SyntheticSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const SyntheticSet& set);
SyntheticSet load_checkpoint(const std::filesystem::path& path);

}  // namespace m3d
