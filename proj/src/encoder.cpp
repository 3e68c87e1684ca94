#include "m3d/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "m3d/simd.hpp"

namespace m3d {

// ---------------------------------------------------------------- arch

EncoderArch EncoderArch::convnet3(std::size_t channels, std::size_t height,
                                  std::size_t width_px, std::size_t width,
                                  std::size_t num_classes) {
  return {EncoderKind::convnet3, channels, height, width_px, width, num_classes};
}

EncoderArch EncoderArch::mlp2(std::size_t channels, std::size_t height,
                              std::size_t width_px, std::size_t hidden,
                              std::size_t num_classes) {
  return {EncoderKind::mlp2, channels, height, width_px, hidden, num_classes};
}

namespace {
constexpr int kConvBlocks = 3;

// Spatial extent after each conv block (floor pooling).
std::size_t pooled_extent(std::size_t extent, int blocks) {
  for (int b = 0; b < blocks; ++b) extent /= 2;
  return extent;
}
}  // namespace

std::size_t EncoderArch::rep_dim() const {
  if (kind == EncoderKind::mlp2) return width;
  return width * pooled_extent(height, kConvBlocks) *
         pooled_extent(width_px, kConvBlocks);
}

void EncoderArch::validate() const {
  if (channels == 0 || height == 0 || width_px == 0)
    throw ConfigError("encoder input shape must be positive");
  if (width == 0) throw ConfigError("encoder width must be positive");
  if (num_classes == 0) throw ConfigError("encoder needs at least one class");
  if (kind == EncoderKind::convnet3 &&
      (pooled_extent(height, kConvBlocks) == 0 ||
       pooled_extent(width_px, kConvBlocks) == 0))
    throw ConfigError("input too small for three 2x2 poolings");
}

std::string EncoderArch::to_string() const {
  std::ostringstream os;
  os << (kind == EncoderKind::convnet3 ? "convnet3" : "mlp2") << ":c" << channels
     << ":h" << height << ":w" << width_px << ":n" << width << ":k"
     << num_classes;
  return os.str();
}

EncoderArch EncoderArch::parse(const std::string& text) {
  std::istringstream is(text);
  std::string token;
  EncoderArch arch;
  if (!std::getline(is, token, ':')) throw ConfigError("empty arch string");
  if (token == "convnet3") {
    arch.kind = EncoderKind::convnet3;
  } else if (token == "mlp2") {
    arch.kind = EncoderKind::mlp2;
  } else {
    throw ConfigError("unknown encoder kind '" + token + "'");
  }
  while (std::getline(is, token, ':')) {
    if (token.size() < 2) throw ConfigError("bad arch field '" + token + "'");
    std::size_t value = 0;
    try {
      value = std::stoul(token.substr(1));
    } catch (const std::exception&) {
      throw ConfigError("bad arch field '" + token + "'");
    }
    switch (token[0]) {
      case 'c': arch.channels = value; break;
      case 'h': arch.height = value; break;
      case 'w': arch.width_px = value; break;
      case 'n': arch.width = value; break;
      case 'k': arch.num_classes = value; break;
      default: throw ConfigError("bad arch field '" + token + "'");
    }
  }
  arch.validate();
  return arch;
}

// ---------------------------------------------------------------- params

template <typename T>
std::size_t EncoderParams<T>::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ShapeError("no parameter named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

template <typename T>
std::size_t EncoderParams<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.size();
  return total;
}

template <typename T>
EncoderParams<T> init_encoder(const EncoderArch& arch, Rng& rng) {
  arch.validate();
  EncoderParams<T> p;
  p.arch = arch;
  p.seed = rng.seed();
  auto add_weight = [&](std::string name, Shape shape, std::size_t fan_in) {
    const T std = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    p.names.push_back(std::move(name));
    p.tensors.push_back(gaussian_draw<T>(rng, std::move(shape), T(0), std));
  };
  auto add_const = [&](std::string name, std::size_t n, T value) {
    p.names.push_back(std::move(name));
    p.tensors.push_back(Tensor<T>::full({n}, value));
  };

  if (arch.kind == EncoderKind::convnet3) {
    std::size_t in = arch.channels;
    for (int b = 0; b < kConvBlocks; ++b) {
      const std::string s = std::to_string(b);
      add_weight("conv" + s + ".weight", {arch.width, in, 3, 3}, in * 9);
      add_const("conv" + s + ".bias", arch.width, T(0));
      add_const("norm" + s + ".gamma", arch.width, T(1));
      add_const("norm" + s + ".beta", arch.width, T(0));
      in = arch.width;
    }
  } else {
    add_weight("fc1.weight", {arch.width, arch.input_size()}, arch.input_size());
    add_const("fc1.bias", arch.width, T(0));
    add_weight("fc2.weight", {arch.width, arch.width}, arch.width);
    add_const("fc2.bias", arch.width, T(0));
  }
  add_weight("head.weight", {arch.num_classes, arch.rep_dim()}, arch.rep_dim());
  add_const("head.bias", arch.num_classes, T(0));
  return p;
}

// ---------------------------------------------------------------- layers

namespace {

// cols[(c * 9 + ky * 3 + kx) * H * W + y * W + x] = in[c][y + ky - 1][x + kx - 1]
template <typename T>
void im2col3x3(const T* in, std::size_t channels, std::size_t h, std::size_t w,
               T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = in + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* dst = cols + (c * 9 + ky * 3 + kx) * hw;
        // valid x range: 0 <= x + kx - 1 < w
        const std::size_t x0 = kx == 0 ? 1 : 0;
        const std::size_t x1 = kx == 2 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          T* drow = dst + y * w;
          if (y + ky < 1 || y + ky - 1 >= h) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = plane + (y + ky - 1) * w + kx;
          if (x0) drow[0] = T(0);
          std::copy(srow + x0 - 1, srow + x1 - 1, drow + x0);
          if (x1 < w) drow[w - 1] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::size_t channels, std::size_t h,
               std::size_t w, T* out) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = out + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* src = cols + (c * 9 + ky * 3 + kx) * hw;
        const std::size_t x0 = kx == 0 ? 1 : 0;
        const std::size_t x1 = kx == 2 ? w - 1 : w;
        for (std::size_t y = 0; y < h; ++y) {
          if (y + ky < 1 || y + ky - 1 >= h) continue;
          T* prow = plane + (y + ky - 1) * w;
          const T* srow = src + y * w;
          for (std::size_t x = x0; x < x1; ++x) prow[x + kx - 1] += srow[x];
        }
      }
    }
  }
}

template <typename T>
struct BlockOutput {
  Tensor<T> pooled;
  Tensor<T> normalized;
  Tensor<T> activated;
  std::vector<T> inv_std;
};

// conv -> instance norm -> ReLU -> avg-pool for a whole batch.
template <typename T>
BlockOutput<T> conv_block_forward(const Tensor<T>& input, const Tensor<T>& weight,
                                  const Tensor<T>& bias, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, bool keep) {
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t cout = weight.dim(0), hw = h * w, k = cin * 9;
  const std::size_t ph = h / 2, pw = w / 2;
  BlockOutput<T> out;
  out.pooled = Tensor<T>({n, cout, ph, pw});
  if (keep) {
    out.normalized = Tensor<T>({n, cout, h, w});
    out.activated = Tensor<T>({n, cout, h, w});
    out.inv_std.resize(n * cout);
  }
  std::vector<T> cols(k * hw);
  std::vector<T> conv(cout * hw);
  std::vector<T> act(hw);
  for (std::size_t img = 0; img < n; ++img) {
    im2col3x3(input.ptr() + img * cin * hw, cin, h, w, cols.data());
    simd::gemm<T>(cout, hw, k, T(1), simd::row_major(weight.ptr(), k),
                  simd::row_major(cols.data(), hw), T(0), conv.data(), hw);
    for (std::size_t c = 0; c < cout; ++c) {
      T* x = conv.data() + c * hw;
      const T b = bias[c];
      double sum = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        x[i] += b;
        sum += x[i];
      }
      const T mean = static_cast<T>(sum / static_cast<double>(hw));
      double sq = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const T d = x[i] - mean;
        x[i] = d;
        sq += static_cast<double>(d) * d;
      }
      const T inv_std = static_cast<T>(
          1.0 / std::sqrt(sq / static_cast<double>(hw) + kInstanceNormEps));
      const T g = gamma[c], be = beta[c];
      T* norm_out = keep ? out.normalized.ptr() + (img * cout + c) * hw : nullptr;
      T* act_out = keep ? out.activated.ptr() + (img * cout + c) * hw : nullptr;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xhat = x[i] * inv_std;
        const T y = g * xhat + be;
        if (keep) {
          norm_out[i] = xhat;
          act_out[i] = y;
        }
        act[i] = y > T(0) ? y : T(0);
      }
      if (keep) out.inv_std[img * cout + c] = inv_std;
      T* pooled = out.pooled.ptr() + (img * cout + c) * ph * pw;
      for (std::size_t y = 0; y < ph; ++y) {
        const T* r0 = act.data() + (2 * y) * w;
        const T* r1 = r0 + w;
        for (std::size_t x2 = 0; x2 < pw; ++x2)
          pooled[y * pw + x2] = T(0.25) * (r0[2 * x2] + r0[2 * x2 + 1] +
                                           r1[2 * x2] + r1[2 * x2 + 1]);
      }
    }
  }
  return out;
}

// y = x W^T + b for x n x in, W out x in.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight,
                        const Tensor<T>& bias) {
  const std::size_t n = x.dim(0), in = weight.dim(1), out = weight.dim(0);
  Tensor<T> y({n, out});
  simd::gemm<T>(n, out, in, T(1), simd::row_major(x.ptr(), in),
                simd::transposed(weight.ptr(), in), T(0), y.ptr(), out);
  for (std::size_t i = 0; i < n; ++i)
    simd::axpy(T(1), bias.ptr(), y.ptr() + i * out, out);
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
void check_batch(const EncoderArch& arch, const Tensor<T>& batch) {
  const Shape expected{batch.rank() > 0 ? batch.dim(0) : 0, arch.channels,
                       arch.height, arch.width_px};
  if (batch.rank() != 4 || batch.shape() != expected)
    throw ShapeError("encoder input " + shape_string(batch.shape()) +
                     " does not match arch " + arch.to_string());
  if (batch.dim(0) == 0) throw ShapeError("encoder input batch is empty");
}

template <typename T>
Tensor<T> run_forward(const EncoderParams<T>& params, const Tensor<T>& batch,
                      bool with_head, Tape<T>* tape,
                      std::vector<typename Tape<T>::ConvRecord>* conv_records,
                      std::vector<typename Tape<T>::DenseRecord>* dense_records,
                      Tensor<T>* rep_out) {
  const EncoderArch& arch = params.arch;
  check_batch(arch, batch);
  require_finite(batch, "encoder input");
  const std::size_t n = batch.dim(0);
  const bool keep = tape != nullptr;
  Tensor<T> rep;
  if (arch.kind == EncoderKind::convnet3) {
    Tensor<T> x = batch;
    for (int b = 0; b < kConvBlocks; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * 4;
      auto out = conv_block_forward(x, params.tensors[base], params.tensors[base + 1],
                                    params.tensors[base + 2],
                                    params.tensors[base + 3], keep);
      if (keep)
        conv_records->push_back({std::move(x), std::move(out.normalized),
                                 std::move(out.activated), std::move(out.inv_std)});
      x = std::move(out.pooled);
    }
    rep = x.reshaped({n, arch.rep_dim()});
  } else {
    Tensor<T> x = batch.reshaped({n, arch.input_size()});
    for (int layer = 0; layer < 2; ++layer) {
      const std::size_t base = static_cast<std::size_t>(layer) * 2;
      Tensor<T> pre = dense_forward(x, params.tensors[base], params.tensors[base + 1]);
      Tensor<T> post = relu(pre);
      if (keep) dense_records->push_back({std::move(x), std::move(pre)});
      x = std::move(post);
    }
    rep = std::move(x);
  }
  require_finite(rep, "encoder representation");
  if (!with_head) {
    if (keep) *rep_out = rep;
    return rep;
  }
  const std::size_t head = params.tensors.size() - 2;
  Tensor<T> logits = dense_forward(rep, params.tensors[head], params.tensors[head + 1]);
  require_finite(logits, "encoder logits");
  if (keep) *rep_out = std::move(rep);
  return logits;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const EncoderParams<T>& params, const Tensor<T>& batch,
                         bool with_head) {
  ForwardResult<T> result;
  Tape<T>& tape = result.tape;
  tape.params_ = &params;
  tape.input_shape_ = batch.shape();
  tape.with_head_ = with_head;
  result.output = run_forward(params, batch, with_head, &tape, &tape.conv_,
                              &tape.dense_, &tape.representation_);
  return result;
}

template <typename T>
Tensor<T> encode(const EncoderParams<T>& params, const Tensor<T>& batch,
                 bool with_head) {
  return run_forward<T>(params, batch, with_head, nullptr, nullptr, nullptr,
                        nullptr);
}

// ---------------------------------------------------------------- backward

template <typename T>
Gradients<T> backward(Tape<T>& tape, const Tensor<T>& grad_out, bool want_input,
                      bool want_params) {
  if (tape.consumed_) throw StateError("tape already consumed by a backward pass");
  if (tape.params_ == nullptr) throw StateError("tape was never recorded");
  const EncoderParams<T>& params = *tape.params_;
  const EncoderArch& arch = params.arch;
  const std::size_t n = tape.input_shape_[0];
  const Shape expected{n, tape.with_head_ ? arch.num_classes : arch.rep_dim()};
  if (grad_out.shape() != expected)
    throw ShapeError("gradient " + shape_string(grad_out.shape()) +
                     " does not match forward output " + shape_string(expected));
  tape.consumed_ = true;

  Gradients<T> grads;
  std::vector<Tensor<T>> pg;
  if (want_params)
    for (const auto& t : params.tensors) pg.emplace_back(t.shape());

  // Dense backward: accumulates dW, db and returns dx.
  auto dense_backward = [&](const Tensor<T>& x, const Tensor<T>& dy,
                            std::size_t w_index, bool need_dx) {
    const Tensor<T>& weight = params.tensors[w_index];
    const std::size_t out = weight.dim(0), in = weight.dim(1);
    if (want_params) {
      simd::gemm<T>(out, in, n, T(1), simd::transposed(dy.ptr(), out),
                    simd::row_major(x.ptr(), in), T(1), pg[w_index].ptr(), in);
      T* db = pg[w_index + 1].ptr();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) db[j] += dy.at(i, j);
    }
    Tensor<T> dx;
    if (need_dx) {
      dx = Tensor<T>({n, in});
      simd::gemm<T>(n, in, out, T(1), simd::row_major(dy.ptr(), out),
                    simd::row_major(weight.ptr(), in), T(0), dx.ptr(), in);
    }
    return dx;
  };

  Tensor<T> d_rep;
  if (tape.with_head_) {
    d_rep = dense_backward(tape.representation_, grad_out,
                           params.tensors.size() - 2, true);
  } else {
    d_rep = grad_out;
  }

  if (arch.kind == EncoderKind::mlp2) {
    Tensor<T> d = std::move(d_rep);
    for (int layer = 1; layer >= 0; --layer) {
      const auto& rec = tape.dense_[static_cast<std::size_t>(layer)];
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(rec.pre_activation[i] > T(0))) d[i] = T(0);
      const bool need_dx = layer > 0 || want_input;
      d = dense_backward(rec.input, d, static_cast<std::size_t>(layer) * 2, need_dx);
    }
    if (want_input) grads.input = d.reshaped(tape.input_shape_);
  } else {
    Tensor<T> d_pooled = std::move(d_rep);
    for (int b = kConvBlocks - 1; b >= 0; --b) {
      const auto& rec = tape.conv_[static_cast<std::size_t>(b)];
      const std::size_t base = static_cast<std::size_t>(b) * 4;
      const Tensor<T>& weight = params.tensors[base];
      const Tensor<T>& gamma = params.tensors[base + 2];
      const std::size_t cin = rec.input.dim(1), h = rec.input.dim(2),
                        w = rec.input.dim(3);
      const std::size_t cout = weight.dim(0), hw = h * w, k = cin * 9;
      const std::size_t ph = h / 2, pw = w / 2;
      const bool need_dx = b > 0 || want_input;
      Tensor<T> d_input;
      if (need_dx) d_input = Tensor<T>({n, cin, h, w});
      std::vector<T> cols(k * hw);
      std::vector<T> d_conv(cout * hw);
      std::vector<T> d_cols(need_dx ? k * hw : 0);
      for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t c = 0; c < cout; ++c) {
          const std::size_t plane = (img * cout + c);
          const T* dp = d_pooled.ptr() + plane * ph * pw;
          const T* y = rec.activated.ptr() + plane * hw;
          const T* xhat = rec.normalized.ptr() + plane * hw;
          T* dy = d_conv.data() + c * hw;
          std::fill(dy, dy + hw, T(0));
          for (std::size_t py = 0; py < ph; ++py)
            for (std::size_t px = 0; px < pw; ++px) {
              const T g = T(0.25) * dp[py * pw + px];
              dy[(2 * py) * w + 2 * px] = g;
              dy[(2 * py) * w + 2 * px + 1] = g;
              dy[(2 * py + 1) * w + 2 * px] = g;
              dy[(2 * py + 1) * w + 2 * px + 1] = g;
            }
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            if (!(y[i] > T(0))) dy[i] = T(0);
            sum_dy += dy[i];
            sum_dy_xhat += static_cast<double>(dy[i]) * xhat[i];
          }
          if (want_params) {
            pg[base + 2][c] += static_cast<T>(sum_dy_xhat);
            pg[base + 3][c] += static_cast<T>(sum_dy);
          }
          // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
          const T g = gamma[c];
          const T inv_std = rec.inv_std[plane];
          const T mean_d = static_cast<T>(g * sum_dy / static_cast<double>(hw));
          const T mean_dx = static_cast<T>(g * sum_dy_xhat / static_cast<double>(hw));
          for (std::size_t i = 0; i < hw; ++i)
            dy[i] = inv_std * (g * dy[i] - mean_d - xhat[i] * mean_dx);
          if (want_params) {
            T sum = 0;
            for (std::size_t i = 0; i < hw; ++i) sum += dy[i];
            pg[base + 1][c] += sum;
          }
        }
        if (want_params) {
          im2col3x3(rec.input.ptr() + img * cin * hw, cin, h, w, cols.data());
          simd::gemm<T>(cout, k, hw, T(1), simd::row_major(d_conv.data(), hw),
                        simd::transposed(cols.data(), hw), T(1), pg[base].ptr(), k);
        }
        if (need_dx) {
          simd::gemm<T>(k, hw, cout, T(1), simd::transposed(weight.ptr(), k),
                        simd::row_major(d_conv.data(), hw), T(0), d_cols.data(), hw);
          col2im3x3(d_cols.data(), cin, h, w, d_input.ptr() + img * cin * hw);
        }
      }
      d_pooled = std::move(d_input);
    }
    if (want_input) grads.input = std::move(d_pooled);
  }

  if (want_input) require_finite(grads.input, "input gradient");
  if (want_params) {
    for (const auto& t : pg) require_finite(t, "parameter gradient");
    grads.params = std::move(pg);
  }
  return grads;
}

#define M3D_INSTANTIATE(T)                                                     \
  template struct EncoderParams<T>;                                           \
  template EncoderParams<T> init_encoder<T>(const EncoderArch&, Rng&);        \
  template ForwardResult<T> forward<T>(const EncoderParams<T>&,               \
                                       const Tensor<T>&, bool);               \
  template Tensor<T> encode<T>(const EncoderParams<T>&, const Tensor<T>&,     \
                               bool);                                         \
  template Gradients<T> backward<T>(Tape<T>&, const Tensor<T>&, bool, bool);

M3D_INSTANTIATE(float)
M3D_INSTANTIATE(double)
#undef M3D_INSTANTIATE

}  // namespace m3d
