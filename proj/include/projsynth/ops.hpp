#pragma once

// Differentiable operations over N x C x H x W image tensors.

#include <cstdint>

#include "projsynth/tensor.hpp"

namespace projsynth {

struct Conv2dGeometry {
  int stride = 1;
  int pad = 0;
};

/// Cross-correlation. kernel is Cout x Cin x kh x kw; bias may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad);

/// Transposed convolution, the adjoint of conv2d with the same geometry.
/// kernel is Cin x Cout x kh x kw (the conv2d kernel it is the adjoint of).
/// Output extent is (H-1)*stride - 2*pad + kh + out_pad.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                           int pad, int out_pad);

/// Bilinear resampling with corner pixels aligned (src = dst * (in-1)/(out-1)).
/// A 1-pixel target samples the centre of the source.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, end) of an N x C x H x W tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end);

/// 2x2 max pooling with stride 2 (floor on odd extents).
template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& x);

struct Activation {
  enum class Kind { relu, lrelu } kind = Kind::relu;
  double slope = 0.0;  // lrelu only, in [0, 1)

  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation lrelu(double s) { return {Kind::lrelu, s}; }
};

/// Elementwise; the derivative at exactly 0 is taken from the negative side.
template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act);

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return activate(x, Activation::relu());
}

/// Inverted dropout: kept entries are divided by keep_prob. The mask is a pure
/// function of seed. Identity when !training or keep_prob == 1.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double keep_prob, bool training, std::uint64_t seed);

enum class NormMode { instance, layer };

/// Standardizes per (n, c) plane (instance) or per sample (layer) with biased
/// variance, then applies per-channel gamma/beta when they are defined.
template <typename T>
Tensor<T> normalize(const Tensor<T>& x, NormMode mode, double eps, const Tensor<T>& gamma, const Tensor<T>& beta);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Stacks single-sample tensors (1 x C x H x W) into a batch.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& samples);

}  // namespace projsynth
