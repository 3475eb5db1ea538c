#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "hdp/extractor.hpp"
#include "hdp/ops.hpp"
#include "hdp/tensor.hpp"
#include "hdp/tnsr.hpp"

namespace hdp {

// Residual feature transference module: 2x2/2 max pool followed by a chain of
// k x k stride-1 convolutions, ReLU after every convolution but the last.
// The shipping layout is three 3x3 convolutions C0 -> Cmid -> Cmid -> C1;
// kernel size and depth are exposed for ablation runs only.
struct RftmConfig {
  std::size_t c0 = 16;
  std::size_t cmid = 32;
  std::size_t c1 = 32;
  std::size_t kernel = 3;
  std::size_t layers = 3;
};

enum class RftmInit {
  kZeroResidual,  // hidden convs seeded, last conv zero: output starts at exactly 0
  kRandom,        // every conv seeded
};

RftmInit parse_rftm_init(std::string_view s);
std::string_view rftm_init_name(RftmInit m);

struct RftmParams {
  std::vector<ConvParams> convs;

  std::size_t param_count() const;
  std::uint64_t hash() const;
  bool operator==(const RftmParams&) const = default;
};

RftmParams init_rftm(const RftmConfig& cfg, std::uint64_t seed, RftmInit mode);

// Activations kept by the forward pass for rftm_backward.
struct RftmCache {
  Shape input_shape;
  PoolResult pool;
  std::vector<Tensor> conv_inputs;  // input of each conv
  std::vector<Tensor> pre;          // pre-ReLU output of each hidden conv
  std::uint64_t params_hash = 0;
};

Tensor rftm_forward(const Tensor& f0, const RftmParams& p, RftmCache* cache = nullptr);

struct ResidualOutput {
  Tensor features;  // F_hat = F + dF
  Tensor base;      // F = ps1(ps0(x))
  Tensor residual;  // dF = rftm(ps0(x))
  RftmCache cache;
};

// Stage-0 output is computed once and shared by both paths.
ResidualOutput residual_forward(const Tensor& x, const ExtractorWeights& w, const RftmParams& p);

// Same as residual_forward's sum, starting from cached stage outputs.
ResidualOutput residual_from_stages(const Tensor& f0, const Tensor& base, const RftmParams& p);

struct RftmGrads {
  std::vector<ConvGrads> convs;  // weights and bias only; input gradients are not kept
};

// Gradients of <grad, F_hat> w.r.t. the module's own parameters. The cache
// must come from a forward pass with the same parameters.
RftmGrads rftm_backward(const RftmCache& cache, const Tensor& grad, const RftmParams& p);

// Entries rftm.conv{1..L}.{weight,bias}.
void add_rftm(TnsrFile& file, const RftmParams& p);
RftmParams rftm_from(const TnsrFile& file);

}  // namespace hdp
