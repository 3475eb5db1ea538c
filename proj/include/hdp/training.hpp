#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdp/extractor.hpp"
#include "hdp/head.hpp"
#include "hdp/ops.hpp"
#include "hdp/partition.hpp"
#include "hdp/rftm.hpp"
#include "hdp/tensor.hpp"

namespace hdp {

struct TrainConfig {
  double lr = 0.002;
  std::size_t batch = 2;
  double momentum = 0.9;
  std::size_t stage1_iters = 500;
  std::size_t stage2_iters = 300;
  std::uint64_t seed = 1;
  double kl_epsilon = 1e-8;
  double temperature = 1.0;
  double finetune_lr = 0.01;
  std::size_t finetune_batch = 16;
  double holdout_fraction = 0.3;

  bool operator==(const TrainConfig&) const = default;

  // Throws ParamError on out-of-range values.
  void validate() const;
};

std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& cfg);

struct KlResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d transferred
};

// Per-sample softmax over all c*h*w elements (scaled by 1/temperature), then
// KL(p_target || q_transferred) with q floored at epsilon, averaged over the
// batch. The target is treated as a constant.
KlResult kl_loss(const Tensor& target, const Tensor& transferred, double epsilon,
                 double temperature = 1.0);

struct TrainReport {
  std::string stage;
  std::uint64_t seed = 0;
  std::vector<double> trace;
  // Measured but never written: report files must be reproducible bitwise.
  double wall_seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::string>> metrics;

  double initial_loss() const;
  double final_loss() const;
  std::optional<std::string> metric(const std::string& key) const;
};

// Mean of trace[first, first + window), clipped to the trace.
double window_mean(const std::vector<double>& trace, std::size_t first, std::size_t window);
double smoothed_start(const std::vector<double>& trace, std::size_t window);
double smoothed_end(const std::vector<double>& trace, std::size_t window);

// "iter<TAB>loss" lines followed by a "# summary" line and key=value lines.
std::string format_report(const TrainReport& r);
TrainReport parse_report(const std::string& text);

// Patches with their pixels stacked as (members, 3, size, size).
struct PatchBank {
  PatchSet set;
  Tensor pixels;
};

struct Stage1Result {
  RftmParams params;
  TrainReport report;
};

// Unsupervised transfer: sampled (i, j) pairs, KL between ps01(j) and the
// residual features of i, SGD on the RFTM parameters only.
Stage1Result train_rftm(const PatchBank& hd_u, const PatchBank& hd_f, const ExtractorWeights& w,
                        const RftmParams& p0, const TrainConfig& cfg);

// Finetune stage: 3x3 C1 -> C1 conv + ReLU, global average pool,
// standardisation, linear head. Training standardises with batch statistics;
// `norm` holds the training-split statistics used at evaluation.
struct FinetuneModel {
  ConvParams fs;
  FeatureStats norm;
  HeadParams head;

  std::uint64_t hash() const;
  bool operator==(const FinetuneModel&) const = default;
};

FinetuneModel init_finetune(std::size_t c1, std::size_t classes, std::uint64_t seed);

Tensor finetune_logits(const Tensor& features, const FinetuneModel& m);

struct LabeledPatches {
  Tensor pixels;
  std::vector<int> labels;
};

struct FinetuneResult {
  FinetuneModel model;
  TrainReport report;
  double heldout_accuracy = 0.0;
  std::size_t train_count = 0;
  std::size_t heldout_count = 0;
};

// Train/held-out split of n items, deterministic per seed. Returns
// (train indices, held-out indices), each sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double holdout,
                                                                            std::uint64_t seed);

// Trains FS + head on frozen residual features of the labeled patches.
FinetuneResult finetune(const LabeledPatches& data, const ExtractorWeights& w, const RftmParams& p,
                        const FinetuneModel& init, const TrainConfig& cfg);

void add_finetune(TnsrFile& file, const FinetuneModel& m);
FinetuneModel finetune_from(const TnsrFile& file);

}  // namespace hdp
