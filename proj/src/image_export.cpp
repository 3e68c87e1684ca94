#include "m3d/image_export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace m3d {

Image8 to_image8(const TensorF& images, std::size_t index, const NormalizationStats& stats) {
  const std::size_t channels = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (channels != 1 && channels != 3)
    throw ShapeError("image export supports 1 or 3 channels, got " + std::to_string(channels));
  if (!stats.empty() && stats.mean.size() != channels)
    throw ShapeError("normalization stats do not match image channels");
  Image8 img{channels, h, w, std::vector<unsigned char>(channels * h * w)};
  const auto src = images.slice(index);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t p = 0; p < h * w; ++p) {
      double v = src[c * h * w + p];
      if (!stats.empty()) v = v * stats.std[c] + stats.mean[c];
      v = std::clamp(v, 0.0, 1.0);
      img.pixels[p * channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << "\n"
      << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255)
    throw FormatError(FormatIssue::bad_magic, path.string() + ": unsupported PNM header");
  in.get();
  Image8 img{magic == "P5" ? 1u : 3u, h, w, {}};
  img.pixels.resize(img.channels * h * w);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
    throw FormatError(FormatIssue::truncated, path.string() + ": truncated pixels");
  return img;
}

std::vector<std::filesystem::path> export_images(const SyntheticSet& set,
                                                 const std::filesystem::path& dir) {
  set.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string ext = set.images.dim(1) == 1 ? ".pgm" : ".ppm";
  const std::size_t channels = set.images.dim(1), h = set.images.dim(2), w = set.images.dim(3);
  Image8 grid{channels, set.num_classes * h, set.ipc * w, {}};
  grid.pixels.resize(channels * grid.height * grid.width);
  std::vector<std::filesystem::path> written;
  for (std::size_t c = 0; c < set.num_classes; ++c)
    for (std::size_t k = 0; k < set.ipc; ++k) {
      const Image8 img = to_image8(set.images, c * set.ipc + k, set.stats);
      std::ostringstream name;
      name << "class" << c << "_" << k << ext;
      written.push_back(dir / name.str());
      write_pnm(written.back(), img);
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(img.pixels.data() + y * w * channels, w * channels,
                    grid.pixels.data() + ((c * h + y) * grid.width + k * w) * channels);
    }
  written.push_back(dir / ("grid" + ext));
  write_pnm(written.back(), grid);
  return written;
}

}  // namespace m3d
