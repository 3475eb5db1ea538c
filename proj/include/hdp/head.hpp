#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hdp/tensor.hpp"

namespace hdp {

// Linear classifier over pooled feature vectors: logits = W x + b, W is
// (classes x width) row-major.
struct HeadParams {
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  std::uint64_t hash() const;
  bool operator==(const HeadParams&) const = default;
};

HeadParams init_head(std::size_t width, std::size_t classes, std::mt19937_64& rng);

// pooled: (n, width, 1, 1) -> logits (n, classes, 1, 1).
Tensor head_forward(const Tensor& pooled, const HeadParams& p);

struct HeadGrads {
  Tensor input;
  std::vector<float> weights;
  std::vector<float> bias;
};

HeadGrads head_backward(const Tensor& pooled, const HeadParams& p, const Tensor& grad_logits);

// Per-channel standardisation of pooled (n, width, 1, 1) features.
struct FeatureStats {
  std::vector<float> mean;
  std::vector<float> inv_std;  // 1 / sqrt(var + 1e-5)
  bool operator==(const FeatureStats&) const = default;
};

FeatureStats feature_stats(const Tensor& pooled);
Tensor standardize_with(const Tensor& pooled, const FeatureStats& s);

// Batch-statistics standardisation and its gradient (statistics depend on the batch).
struct Standardized {
  Tensor z;
  std::vector<double> inv_std;
};
Standardized standardize_batch(const Tensor& pooled);
Tensor standardize_batch_grad(const Standardized& s, const Tensor& grad_z);

struct XentResult {
  double loss = 0.0;
  Tensor grad;   // d(mean loss) / d logits
  std::size_t correct = 0;
};

// Mean softmax cross-entropy over the batch.
XentResult softmax_xent(const Tensor& logits, std::span<const int> labels);

// Index of the largest logit per sample (first on ties).
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace hdp
