#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hdp/tensor.hpp"

namespace hdp {

// Convolution weights (c_out, c_in, kh, kw) with one bias per output channel.
// Zero padding only; cross-correlation (the kernel is not flipped).
struct ConvParams {
  Tensor weights;
  std::vector<float> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t c_out() const { return weights.shape().n; }
  std::size_t c_in() const { return weights.shape().c; }
  std::size_t kh() const { return weights.shape().h; }
  std::size_t kw() const { return weights.shape().w; }
  std::size_t param_count() const { return weights.numel() + bias.size(); }
  std::uint64_t hash(std::uint64_t seed = 0xcbf29ce484222325ULL) const;
  bool operator==(const ConvParams&) const = default;
};

// k x k stride-1 convolution with shape-preserving padding. Weights drawn from
// N(0, gain / fan_in), biases zero.
ConvParams make_conv(std::size_t c_in, std::size_t c_out, std::size_t k, std::mt19937_64& rng,
                     double gain = 2.0);
ConvParams zero_conv(std::size_t c_in, std::size_t c_out, std::size_t k);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  std::vector<float> bias;
};

Shape conv2d_output_shape(const Shape& input, const ConvParams& p);
Tensor conv2d(const Tensor& input, const ConvParams& p);

// Gradients of <grad_out, conv2d(input, p)>. With need_input = false the
// input gradient is left empty (used where the input is a frozen activation).
ConvGrads conv2d_grad(const Tensor& input, const ConvParams& p, const Tensor& grad_out,
                      bool need_input = true);

struct PoolResult {
  Tensor output;
  // Flat index into the pooled input of each window's winner (first max in
  // row-major window order).
  std::vector<std::uint32_t> argmax;
};

// 2x2 stride-2 max pooling; rejects odd spatial extents.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_grad(const std::vector<std::uint32_t>& argmax, const Tensor& grad_out,
                     const Shape& input_shape);

Tensor relu(const Tensor& input);
// Passes grad_out where input > 0.
Tensor relu_grad(const Tensor& input, const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);

// Mean over each (n, c) plane -> shape (n, c, 1, 1).
Tensor global_avg_pool(const Tensor& input);
// Broadcasts (n, c, 1, 1) gradients back over planes of `input_shape`.
Tensor global_avg_pool_grad(const Tensor& grad_out, const Shape& input_shape);

}  // namespace hdp
