#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3d/rng.hpp"
#include "m3d/tensor.hpp"

namespace m3d {

enum class EncoderKind { convnet3, mlp2 };

// Network shape. convnet3 is three blocks of
//   conv 3x3 (stride 1, pad 1) -> instance norm -> ReLU -> avg-pool 2x2
// with `width` channels per block; the representation is the flattened
// final feature map. mlp2 is two ReLU layers of `width` hidden units over
// the flattened input. Both carry a linear classification head with
// `num_classes` outputs.
struct EncoderArch {
  EncoderKind kind = EncoderKind::convnet3;
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width_px = 28;
  std::size_t width = 128;
  std::size_t num_classes = 10;

  static EncoderArch convnet3(std::size_t channels, std::size_t height,
                              std::size_t width_px, std::size_t width = 128,
                              std::size_t num_classes = 10);
  static EncoderArch mlp2(std::size_t channels, std::size_t height,
                          std::size_t width_px, std::size_t hidden = 256,
                          std::size_t num_classes = 10);

  std::size_t input_size() const { return channels * height * width_px; }
  std::size_t rep_dim() const;
  void validate() const;

  // Compact textual form, e.g. "convnet3:c1:h28:w28:n128:k10".
  std::string to_string() const;
  static EncoderArch parse(const std::string& text);

  friend bool operator==(const EncoderArch&, const EncoderArch&) = default;
};

inline constexpr double kInstanceNormEps = 1e-5;

// Ordered, named parameter tensors. convnet3 blocks contribute
// conv{b}.weight (C_out, C_in, 3, 3), conv{b}.bias, norm{b}.gamma and
// norm{b}.beta; mlp2 contributes fc{1,2}.weight and fc{1,2}.bias; both end
// with head.weight (classes, rep_dim) and head.bias.
template <typename T>
struct EncoderParams {
  EncoderArch arch;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;
  std::uint64_t seed = 0;

  std::size_t index_of(const std::string& name) const;
  const Tensor<T>& get(const std::string& name) const {
    return tensors[index_of(name)];
  }
  std::size_t parameter_count() const;

  template <typename U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out{arch, names, {}, seed};
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }
};

// Conv/linear weights ~ N(0, 2 / fan_in); biases and norm shifts 0; norm
// scales 1. Draws follow parameter order from `rng`.
template <typename T>
EncoderParams<T> init_encoder(const EncoderArch& arch, Rng& rng);

template <typename T>
class Tape;

template <typename T>
struct ForwardResult;

// Runs the network on an n x C x H x W batch. Output is the n x rep_dim
// representation, or n x num_classes logits when with_head is set. The tape
// records what backward needs and must not outlive `params`.
template <typename T>
ForwardResult<T> forward(const EncoderParams<T>& params, const Tensor<T>& batch,
                         bool with_head);

// Forward pass without recording; cheaper for batches that never need a
// gradient (real images during condensation, evaluation).
template <typename T>
Tensor<T> encode(const EncoderParams<T>& params, const Tensor<T>& batch,
                 bool with_head);

template <typename T>
struct Gradients {
  Tensor<T> input;                 // empty unless requested
  std::vector<Tensor<T>> params;   // empty unless requested
};

// Reverse pass for the recorded forward. A tape can be replayed once;
// a second call throws StateError.
template <typename T>
Gradients<T> backward(Tape<T>& tape, const Tensor<T>& grad_out,
                      bool want_input, bool want_params);

template <typename T>
Tensor<T> backward_inputs(Tape<T>& tape, const Tensor<T>& grad_out) {
  return backward(tape, grad_out, true, false).input;
}

template <typename T>
std::vector<Tensor<T>> backward_weights(Tape<T>& tape, const Tensor<T>& grad_out) {
  return backward(tape, grad_out, false, true).params;
}

template <typename T>
class Tape {
 public:
  bool consumed() const noexcept { return consumed_; }

  struct ConvRecord {
    Tensor<T> input;             // n x C_in x H x W
    Tensor<T> normalized;        // n x C_out x H x W, pre-affine
    Tensor<T> activated;         // n x C_out x H x W, post-affine pre-ReLU
    std::vector<T> inv_std;      // n * C_out
  };
  struct DenseRecord {
    Tensor<T> input;             // n x in
    Tensor<T> pre_activation;    // n x out
  };

 private:
  friend ForwardResult<T> forward<T>(const EncoderParams<T>&, const Tensor<T>&,
                                     bool);
  friend Gradients<T> backward<T>(Tape<T>&, const Tensor<T>&, bool, bool);

  const EncoderParams<T>* params_ = nullptr;
  Shape input_shape_;
  bool with_head_ = false;
  bool consumed_ = false;
  std::vector<ConvRecord> conv_;
  std::vector<DenseRecord> dense_;
  Tensor<T> representation_;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  Tape<T> tape;
};

}  // namespace m3d
