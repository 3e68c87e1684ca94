#pragma once

#include <string>

#include "m3d/tensor.hpp"

namespace m3d {

enum class UpsampleMode { nearest, bilinear };

std::string to_string(UpsampleMode mode);
UpsampleMode parse_upsample_mode(const std::string& name);

// Splits every C x h x w image on a regular l x l grid and resizes each
// (h/l) x (w/l) patch back to h x w. Input k x C x h x w, output
// (k * l * l) x C x h x w with the patches of image i at rows
// [i * l * l, (i + 1) * l * l) in row-major grid order. Bilinear uses
// half-pixel centres with edge clamping; nearest replicates each source
// pixel into an l x l block. l must divide h and w.
template <typename T>
Tensor<T> factor_expand(const Tensor<T>& images, std::size_t factor,
                        UpsampleMode mode);

// Adjoint of factor_expand: maps a gradient on the expanded batch back onto
// the stored images.
template <typename T>
Tensor<T> factor_expand_backward(const Tensor<T>& grad_expanded,
                                 std::size_t factor, UpsampleMode mode);

// Inverse direction used for initialization: area-averages l x l real
// images down by l and tiles them into one h x w image. Input
// (k * l * l) x C x h x w, output k x C x h x w.
template <typename T>
Tensor<T> factor_compose(const Tensor<T>& images, std::size_t factor);

}  // namespace m3d
