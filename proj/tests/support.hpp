#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

#include "m3d/rng.hpp"
#include "m3d/tensor.hpp"

namespace m3d::testing {

inline TensorD random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  return gaussian_draw<double>(rng, std::move(shape), 0.0, scale);
}

// |a - b| relative to the larger magnitude, with an absolute floor so that
// two tiny values compare as equal.
inline double rel_error(double a, double b, double floor = 1e-10) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& x,
                                 double step = 1e-5) {
  const double keep = x;
  x = keep + step;
  const double up = f();
  x = keep - step;
  const double down = f();
  x = keep;
  return (up - down) / (2.0 * step);
}

inline std::filesystem::path data_root() { return M3D_TEST_DATA_ROOT; }

inline bool mnist_available() {
  return std::filesystem::exists(data_root() / "mnist" / "train-images-idx3-ubyte");
}

}  // namespace m3d::testing
