#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hdp/analysis.hpp"
#include "hdp/partition.hpp"
#include "hdp/rftm.hpp"
#include "hdp/training.hpp"

namespace hdp {

struct PipelineConfig {
  std::uint64_t seed = 7;

  // Corpus synthesis. Both domains share the clean-scene generator and the
  // transmission range; they differ in veiling-light colour.
  std::size_t synth_count = 200;
  std::size_t synth_size = 128;
  int synth_classes = 4;
  double synth_dark_fraction = 0.5;
  double synth_speckle = 0.08;
  double synth_t_low = 0.05;
  double synth_t_high = 0.95;
  std::size_t synth_grid = 3;
  std::array<double, 3> u_airlight_low{0.05, 0.55, 0.70};
  std::array<double, 3> u_airlight_high{0.15, 0.75, 0.90};
  std::array<double, 3> f_airlight_low{0.60, 0.62, 0.64};
  std::array<double, 3> f_airlight_high{0.75, 0.77, 0.79};

  std::size_t udcp_window = 15;
  double udcp_omega = 0.95;

  double threshold = 0.5;
  std::size_t patch_size = 64;
  std::size_t patch_stride = 64;
  Aggregate aggregate = Aggregate::kMean;
  std::size_t max_patches = 200;
  std::string scores_path;  // empty: no DFUI gate
  double ap_threshold = 60.0;

  std::size_t c0 = 16;
  std::size_t c1 = 32;
  std::size_t pretrain_iters = 300;
  std::size_t pretrain_batch = 8;
  double pretrain_lr = 0.01;
  double pretrain_weight_decay = 0.03;

  std::size_t rftm_cmid = 32;
  std::size_t rftm_kernel = 3;
  std::size_t rftm_layers = 3;
  RftmInit rftm_init = RftmInit::kZeroResidual;
  std::string rftm_placement = "after_stage0";

  TrainConfig train;
  std::size_t finetune_max_patches = 400;
  std::size_t finetune_repeats = 3;

  std::size_t permutations = 200;
  std::size_t tsne_points = 100;  // per cloud
  double tsne_perplexity = 30.0;
  std::size_t tsne_iters = 1000;

  std::vector<double> sweep_thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  bool operator==(const PipelineConfig&) const = default;

  // Range checks across fields; throws ParamError.
  void validate() const;
};

// Every key in canonical order.
std::vector<std::string> config_keys();

// Lines "key = value" in canonical order.
std::string serialize_config(const PipelineConfig& c);

// Starts from defaults; unknown or repeated keys and malformed values throw
// FormatError. '#' starts a comment.
PipelineConfig parse_config(const std::string& text);

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value);

}  // namespace hdp
