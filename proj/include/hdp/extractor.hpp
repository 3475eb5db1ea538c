#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hdp/ops.hpp"
#include "hdp/tensor.hpp"
#include "hdp/tnsr.hpp"

namespace hdp {

// Two frozen feature stages standing in for a backbone's shallow ("stage 0")
// and intermediate ("stage 1") blocks. Each stage is a 3x3 stride-1 pad-1
// convolution, ReLU and 2x2 max pooling, so each halves the spatial extent.
struct ExtractorConfig {
  std::size_t in_channels = 3;
  std::size_t c0 = 16;
  std::size_t c1 = 32;
};

struct ExtractorWeights {
  ConvParams ps0;
  ConvParams ps1;
  bool frozen = false;

  std::size_t c0() const { return ps0.c_out(); }
  std::size_t c1() const { return ps1.c_out(); }
  std::uint64_t hash() const;
};

// Fan-in scaled normal init, deterministic per seed.
ExtractorWeights init_extractor(const ExtractorConfig& cfg, std::uint64_t seed);

Tensor ps0_forward(const Tensor& x, const ExtractorWeights& w);
Tensor ps1_forward(const Tensor& f0, const ExtractorWeights& w);
Tensor ps01_forward(const Tensor& x, const ExtractorWeights& w);

struct PretrainOptions {
  std::size_t iterations = 200;
  std::size_t batch = 8;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;  // L2 on conv weights
  std::uint64_t seed = 1;
};

struct PretrainReport {
  std::vector<double> loss_trace;
  // Accuracy of the temporary head on the training patches after the last step.
  double train_accuracy = 0.0;
  std::size_t classes = 0;
};

// Shape-classification pretraining through a temporary global-average-pool +
// linear head (discarded afterwards). `patches` is (n, 3, h, w); labels are
// class ids in [0, classes). Returns frozen weights.
ExtractorWeights pretrain_extractor(const Tensor& patches, std::span<const int> labels,
                                    const ExtractorConfig& cfg, const PretrainOptions& opts,
                                    PretrainReport* report = nullptr);

// Entries ps0.weight, ps0.bias, ps1.weight, ps1.bias.
void add_extractor(TnsrFile& file, const ExtractorWeights& w);
ExtractorWeights extractor_from(const TnsrFile& file, bool frozen = true);

}  // namespace hdp
