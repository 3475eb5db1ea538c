#include "hdp/head.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hdp/error.hpp"

namespace hdp {

std::uint64_t HeadParams::hash() const { return fnv1a(bias, fnv1a(weights)); }

HeadParams init_head(std::size_t width, std::size_t classes, std::mt19937_64& rng) {
  HeadParams p{width, classes, std::vector<float>(width * classes), std::vector<float>(classes, 0.0f)};
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(width)));
  for (float& v : p.weights) v = static_cast<float>(normal(rng));
  return p;
}

namespace {

constexpr double kVarEps = 1e-5;

void check_pooled(const Tensor& pooled, const char* what) {
  const Shape& s = pooled.shape();
  if (s.h != 1 || s.w != 1 || s.n == 0) {
    throw ShapeError(std::string(what) + ": expected non-empty (n, width, 1, 1), got " + s.str());
  }
}

// Per-channel mean and 1 / sqrt(var + eps) in double.
std::pair<std::vector<double>, std::vector<double>> moments(const Tensor& pooled) {
  const std::size_t n = pooled.shape().n, c = pooled.shape().c;
  std::vector<double> mean(c), inv(c);
  for (std::size_t j = 0; j < c; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += pooled[i * c + j];
    m /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (pooled[i * c + j] - m) * (pooled[i * c + j] - m);
    mean[j] = m;
    inv[j] = 1.0 / std::sqrt(var / static_cast<double>(n) + kVarEps);
  }
  return {std::move(mean), std::move(inv)};
}

}  // namespace

FeatureStats feature_stats(const Tensor& pooled) {
  check_pooled(pooled, "feature_stats");
  const auto [mean, inv] = moments(pooled);
  return {std::vector<float>(mean.begin(), mean.end()), std::vector<float>(inv.begin(), inv.end())};
}

Tensor standardize_with(const Tensor& pooled, const FeatureStats& s) {
  check_pooled(pooled, "standardize_with");
  const std::size_t n = pooled.shape().n, c = pooled.shape().c;
  if (s.mean.size() != c || s.inv_std.size() != c) {
    throw ShapeError("standardize_with: statistics width " + std::to_string(s.mean.size()) +
                     " differs from feature width " + std::to_string(c));
  }
  Tensor z(pooled.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      z[i * c + j] = static_cast<float>((static_cast<double>(pooled[i * c + j]) - s.mean[j]) * s.inv_std[j]);
    }
  }
  return z;
}

Standardized standardize_batch(const Tensor& pooled) {
  check_pooled(pooled, "standardize_batch");
  const std::size_t n = pooled.shape().n, c = pooled.shape().c;
  auto [mean, inv] = moments(pooled);
  Standardized s{Tensor(pooled.shape()), std::move(inv)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      s.z[i * c + j] = static_cast<float>((pooled[i * c + j] - mean[j]) * s.inv_std[j]);
    }
  }
  return s;
}

Tensor standardize_batch_grad(const Standardized& s, const Tensor& grad_z) {
  if (grad_z.shape() != s.z.shape()) throw ShapeError("standardize_batch_grad: gradient shape mismatch");
  const std::size_t n = s.z.shape().n, c = s.z.shape().c;
  const auto nd = static_cast<double>(n);
  Tensor g(s.z.shape());
  for (std::size_t j = 0; j < c; ++j) {
    double sum_g = 0.0, sum_gz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += grad_z[i * c + j];
      sum_gz += static_cast<double>(grad_z[i * c + j]) * s.z[i * c + j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      g[i * c + j] = static_cast<float>(s.inv_std[j] / nd *
                                        (nd * grad_z[i * c + j] - sum_g - s.z[i * c + j] * sum_gz));
    }
  }
  return g;
}

Tensor head_forward(const Tensor& pooled, const HeadParams& p) {
  const Shape& s = pooled.shape();
  if (s.c != p.width || s.h != 1 || s.w != 1) {
    throw ShapeError("head_forward: pooled features " + s.str() + " do not match head width " +
                     std::to_string(p.width));
  }
  Tensor logits(Shape{s.n, p.classes, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t k = 0; k < p.classes; ++k) {
      double acc = p.bias[k];
      for (std::size_t c = 0; c < p.width; ++c) {
        acc += static_cast<double>(p.weights[k * p.width + c]) * pooled[n * p.width + c];
      }
      logits[n * p.classes + k] = static_cast<float>(acc);
    }
  }
  return logits;
}

HeadGrads head_backward(const Tensor& pooled, const HeadParams& p, const Tensor& grad_logits) {
  const std::size_t n_batch = pooled.shape().n;
  if (grad_logits.shape() != Shape{n_batch, p.classes, 1, 1}) {
    throw ShapeError("head_backward: grad " + grad_logits.shape().str() + " vs head with " +
                     std::to_string(p.classes) + " classes");
  }
  HeadGrads g{Tensor(pooled.shape()), std::vector<float>(p.weights.size()),
              std::vector<float>(p.classes)};
  for (std::size_t k = 0; k < p.classes; ++k) {
    double b = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) b += grad_logits[n * p.classes + k];
    g.bias[k] = static_cast<float>(b);
    for (std::size_t c = 0; c < p.width; ++c) {
      double w = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        w += static_cast<double>(grad_logits[n * p.classes + k]) * pooled[n * p.width + c];
      }
      g.weights[k * p.width + c] = static_cast<float>(w);
    }
  }
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < p.width; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p.classes; ++k) {
        acc += static_cast<double>(grad_logits[n * p.classes + k]) * p.weights[k * p.width + c];
      }
      g.input[n * p.width + c] = static_cast<float>(acc);
    }
  }
  return g;
}

XentResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
  const std::size_t n_batch = logits.shape().n, k_cls = logits.shape().c;
  if (labels.size() != n_batch) throw ShapeError("softmax_xent: label count differs from batch");
  XentResult r{0.0, Tensor(logits.shape()), 0};
  std::vector<double> prob(k_cls);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= k_cls) {
      throw ParamError("softmax_xent: label " + std::to_string(y) + " out of range");
    }
    const float* z = logits.data().data() + n * k_cls;
    const double zmax = *std::max_element(z, z + k_cls);
    double sum = 0.0;
    for (std::size_t k = 0; k < k_cls; ++k) sum += (prob[k] = std::exp(z[k] - zmax));
    const double log_sum = std::log(sum);
    r.loss += -(z[y] - zmax - log_sum);
    std::size_t best = 0;
    for (std::size_t k = 0; k < k_cls; ++k) {
      if (z[k] > z[best]) best = k;
      const double pk = prob[k] / sum;
      r.grad[n * k_cls + k] =
          static_cast<float>((pk - (static_cast<int>(k) == y ? 1.0 : 0.0)) / static_cast<double>(n_batch));
    }
    if (static_cast<int>(best) == y) ++r.correct;
  }
  r.loss /= static_cast<double>(n_batch);
  return r;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n_batch = logits.shape().n, k_cls = logits.shape().c;
  std::vector<int> out(n_batch);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const float* z = logits.data().data() + n * k_cls;
    out[n] = static_cast<int>(std::max_element(z, z + k_cls) - z);
  }
  return out;
}

}  // namespace hdp
