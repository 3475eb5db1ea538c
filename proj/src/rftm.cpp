#include "hdp/rftm.hpp"

#include <random>
#include <string>

#include "hdp/error.hpp"

namespace hdp {

RftmInit parse_rftm_init(std::string_view s) {
  if (s == "zero-residual") return RftmInit::kZeroResidual;
  if (s == "random") return RftmInit::kRandom;
  throw ParamError("unknown RFTM init mode '" + std::string(s) + "' (zero-residual or random)");
}

std::string_view rftm_init_name(RftmInit m) {
  return m == RftmInit::kZeroResidual ? "zero-residual" : "random";
}

std::size_t RftmParams::param_count() const {
  std::size_t n = 0;
  for (const auto& c : convs) n += c.param_count();
  return n;
}

std::uint64_t RftmParams::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& c : convs) h = c.hash(h);
  return h;
}

RftmParams init_rftm(const RftmConfig& cfg, std::uint64_t seed, RftmInit mode) {
  if (cfg.layers < 2) throw ParamError("RFTM needs at least 2 convolutions");
  if (cfg.kernel % 2 == 0) throw ParamError("RFTM kernel size must be odd");
  if (cfg.c0 < 1 || cfg.cmid < 1 || cfg.c1 < 1) throw ParamError("RFTM channel counts must be >= 1");
  std::mt19937_64 rng(seed);
  RftmParams p;
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    const std::size_t cin = k == 0 ? cfg.c0 : cfg.cmid;
    const bool last = k + 1 == cfg.layers;
    const std::size_t cout = last ? cfg.c1 : cfg.cmid;
    if (last && mode == RftmInit::kZeroResidual) {
      p.convs.push_back(zero_conv(cin, cout, cfg.kernel));
    } else {
      // Linear output layer uses unit gain; ReLU layers use gain 2.
      p.convs.push_back(make_conv(cin, cout, cfg.kernel, rng, last ? 1.0 : 2.0));
    }
  }
  return p;
}

Tensor rftm_forward(const Tensor& f0, const RftmParams& p, RftmCache* cache) {
  if (p.convs.empty()) throw ShapeError("rftm_forward: module has no convolutions");
  const Shape& s = f0.shape();
  if (s.c != p.convs.front().c_in()) {
    throw ShapeError("rftm_forward: input " + s.str() + " has " + std::to_string(s.c) +
                     " channels, module expects " + std::to_string(p.convs.front().c_in()));
  }
  PoolResult pool = maxpool2(f0);
  Tensor x = pool.output;
  RftmCache c;
  c.input_shape = s;
  for (std::size_t k = 0; k < p.convs.size(); ++k) {
    Tensor y = conv2d(x, p.convs[k]);
    if (cache != nullptr) c.conv_inputs.push_back(std::move(x));
    if (k + 1 < p.convs.size()) {
      x = relu(y);
      if (cache != nullptr) c.pre.push_back(std::move(y));
    } else {
      x = std::move(y);
    }
  }
  if (cache != nullptr) {
    c.pool = std::move(pool);
    c.params_hash = p.hash();
    *cache = std::move(c);
  }
  return x;
}

ResidualOutput residual_from_stages(const Tensor& f0, const Tensor& base, const RftmParams& p) {
  ResidualOutput out;
  out.residual = rftm_forward(f0, p, &out.cache);
  if (out.residual.shape() != base.shape()) {
    throw ShapeError("residual_forward: module output " + out.residual.shape().str() +
                     " does not match stage output " + base.shape().str());
  }
  out.features = add(base, out.residual);
  out.base = base;
  return out;
}

ResidualOutput residual_forward(const Tensor& x, const ExtractorWeights& w, const RftmParams& p) {
  const Tensor f0 = ps0_forward(x, w);
  return residual_from_stages(f0, ps1_forward(f0, w), p);
}

RftmGrads rftm_backward(const RftmCache& cache, const Tensor& grad, const RftmParams& p) {
  if (cache.conv_inputs.size() != p.convs.size() || cache.params_hash != p.hash()) {
    throw StateError("rftm_backward: cache was produced with different parameters");
  }
  const Shape out_shape = conv2d_output_shape(cache.conv_inputs.back().shape(), p.convs.back());
  if (grad.shape() != out_shape) {
    throw ShapeError("rftm_backward: grad " + grad.shape().str() + " vs output " + out_shape.str());
  }
  RftmGrads g;
  g.convs.resize(p.convs.size());
  Tensor upstream = grad;
  for (std::size_t k = p.convs.size(); k-- > 0;) {
    const bool need_input = k > 0;
    g.convs[k] = conv2d_grad(cache.conv_inputs[k], p.convs[k], upstream, need_input);
    if (need_input) upstream = relu_grad(cache.pre[k - 1], g.convs[k].input);
    g.convs[k].input = Tensor();
  }
  return g;
}

void add_rftm(TnsrFile& file, const RftmParams& p) {
  for (std::size_t k = 0; k < p.convs.size(); ++k) {
    const std::string prefix = "rftm.conv" + std::to_string(k + 1);
    file.add(prefix + ".weight", p.convs[k].weights);
    file.add(prefix + ".bias", {static_cast<std::uint32_t>(p.convs[k].bias.size())}, p.convs[k].bias);
  }
}

RftmParams rftm_from(const TnsrFile& file) {
  RftmParams p;
  for (std::size_t k = 1;; ++k) {
    const std::string prefix = "rftm.conv" + std::to_string(k);
    if (!file.contains(prefix + ".weight")) break;
    ConvParams c;
    c.weights = file.tensor(prefix + ".weight");
    c.bias = file.get(prefix + ".bias").data;
    c.stride = 1;
    c.padding = (c.kh() - 1) / 2;
    if (c.bias.size() != c.c_out()) throw FormatError(prefix + ": bias length mismatch");
    if (!p.convs.empty() && p.convs.back().c_out() != c.c_in()) {
      throw FormatError(prefix + ": input channels do not chain");
    }
    p.convs.push_back(std::move(c));
  }
  if (p.convs.size() < 2) throw FormatError("RFTM file holds fewer than 2 convolutions");
  return p;
}

}  // namespace hdp
