#include "m3d/factor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace m3d {

std::string to_string(UpsampleMode mode) {
  return mode == UpsampleMode::nearest ? "nearest" : "bilinear";
}

UpsampleMode parse_upsample_mode(const std::string& name) {
  if (name == "nearest") return UpsampleMode::nearest;
  if (name == "bilinear") return UpsampleMode::bilinear;
  throw ConfigError("unknown up-sampling mode '" + name + "'");
}

namespace {

// Two-tap interpolation weights for one output coordinate.
struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> make_taps(std::size_t in, std::size_t out, UpsampleMode mode) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (mode == UpsampleMode::nearest) {
      const std::size_t i = std::min(in - 1, o * in / out);
      taps[o] = {i, i, 1.0, 0.0};
      continue;
    }
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

struct Geometry {
  std::size_t count, channels, h, w, ph, pw;
};

Geometry check_geometry(const Shape& shape, std::size_t factor) {
  if (shape.size() != 4) throw ShapeError("factor technique expects k x C x h x w");
  if (factor == 0) throw ShapeError("factor must be >= 1");
  if (shape[2] % factor != 0 || shape[3] % factor != 0)
    throw ShapeError("factor " + std::to_string(factor) +
                     " does not divide image size " + shape_string(shape));
  return {shape[0], shape[1], shape[2], shape[3], shape[2] / factor,
          shape[3] / factor};
}

}  // namespace

template <typename T>
Tensor<T> factor_expand(const Tensor<T>& images, std::size_t factor,
                        UpsampleMode mode) {
  const Geometry g = check_geometry(images.shape(), factor);
  if (factor == 1) return images;
  const auto ty = make_taps(g.ph, g.h, mode);
  const auto tx = make_taps(g.pw, g.w, mode);
  const std::size_t per_image = factor * factor;
  Tensor<T> out({g.count * per_image, g.channels, g.h, g.w});
  std::vector<double> rows(g.h * g.pw);
  for (std::size_t k = 0; k < g.count; ++k)
    for (std::size_t gy = 0; gy < factor; ++gy)
      for (std::size_t gx = 0; gx < factor; ++gx)
        for (std::size_t c = 0; c < g.channels; ++c) {
          const T* src = images.ptr() + ((k * g.channels + c) * g.h + gy * g.ph) * g.w +
                         gx * g.pw;
          // Vertical pass into an h x pw buffer, then horizontal.
          for (std::size_t y = 0; y < g.h; ++y) {
            const Tap& t = ty[y];
            for (std::size_t x = 0; x < g.pw; ++x)
              rows[y * g.pw + x] = t.w0 * src[t.i0 * g.w + x] + t.w1 * src[t.i1 * g.w + x];
          }
          const std::size_t patch = k * per_image + gy * factor + gx;
          T* dst = out.ptr() + (patch * g.channels + c) * g.h * g.w;
          for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = 0; x < g.w; ++x) {
              const Tap& t = tx[x];
              dst[y * g.w + x] = static_cast<T>(t.w0 * rows[y * g.pw + t.i0] +
                                                t.w1 * rows[y * g.pw + t.i1]);
            }
        }
  return out;
}

template <typename T>
Tensor<T> factor_expand_backward(const Tensor<T>& grad_expanded,
                                 std::size_t factor, UpsampleMode mode) {
  const Geometry g = check_geometry(grad_expanded.shape(), factor);
  if (factor == 1) return grad_expanded;
  const std::size_t per_image = factor * factor;
  if (g.count % per_image != 0)
    throw ShapeError("expanded gradient count is not a multiple of l*l");
  const std::size_t count = g.count / per_image;
  const auto ty = make_taps(g.ph, g.h, mode);
  const auto tx = make_taps(g.pw, g.w, mode);
  Tensor<T> out({count, g.channels, g.h, g.w});
  std::vector<double> rows(g.h * g.pw);
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t gy = 0; gy < factor; ++gy)
      for (std::size_t gx = 0; gx < factor; ++gx)
        for (std::size_t c = 0; c < g.channels; ++c) {
          const std::size_t patch = k * per_image + gy * factor + gx;
          const T* src = grad_expanded.ptr() + (patch * g.channels + c) * g.h * g.w;
          std::fill(rows.begin(), rows.end(), 0.0);
          for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = 0; x < g.w; ++x) {
              const Tap& t = tx[x];
              rows[y * g.pw + t.i0] += t.w0 * src[y * g.w + x];
              rows[y * g.pw + t.i1] += t.w1 * src[y * g.w + x];
            }
          T* dst = out.ptr() + ((k * g.channels + c) * g.h + gy * g.ph) * g.w + gx * g.pw;
          for (std::size_t y = 0; y < g.h; ++y) {
            const Tap& t = ty[y];
            for (std::size_t x = 0; x < g.pw; ++x) {
              dst[t.i0 * g.w + x] += static_cast<T>(t.w0 * rows[y * g.pw + x]);
              dst[t.i1 * g.w + x] += static_cast<T>(t.w1 * rows[y * g.pw + x]);
            }
          }
        }
  return out;
}

template <typename T>
Tensor<T> factor_compose(const Tensor<T>& images, std::size_t factor) {
  const Geometry g = check_geometry(images.shape(), factor);
  if (factor == 1) return images;
  const std::size_t per_image = factor * factor;
  if (g.count % per_image != 0)
    throw ShapeError("image count is not a multiple of l*l");
  const std::size_t count = g.count / per_image;
  Tensor<T> out({count, g.channels, g.h, g.w});
  const double inv_area = 1.0 / static_cast<double>(per_image);
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t gy = 0; gy < factor; ++gy)
      for (std::size_t gx = 0; gx < factor; ++gx)
        for (std::size_t c = 0; c < g.channels; ++c) {
          const std::size_t src_index = k * per_image + gy * factor + gx;
          const T* src = images.ptr() + (src_index * g.channels + c) * g.h * g.w;
          T* dst = out.ptr() + ((k * g.channels + c) * g.h + gy * g.ph) * g.w + gx * g.pw;
          for (std::size_t y = 0; y < g.ph; ++y)
            for (std::size_t x = 0; x < g.pw; ++x) {
              double acc = 0.0;
              for (std::size_t dy = 0; dy < factor; ++dy)
                for (std::size_t dx = 0; dx < factor; ++dx)
                  acc += src[(y * factor + dy) * g.w + x * factor + dx];
              dst[y * g.w + x] = static_cast<T>(acc * inv_area);
            }
        }
  return out;
}

#define M3D_INSTANTIATE(T)                                                       \
  template Tensor<T> factor_expand<T>(const Tensor<T>&, std::size_t, UpsampleMode); \
  template Tensor<T> factor_expand_backward<T>(const Tensor<T>&, std::size_t,   \
                                               UpsampleMode);                   \
  template Tensor<T> factor_compose<T>(const Tensor<T>&, std::size_t);

M3D_INSTANTIATE(float)
M3D_INSTANTIATE(double)
#undef M3D_INSTANTIATE

}  // namespace m3d
