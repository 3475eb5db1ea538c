#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hdp/analysis.hpp"
#include "hdp/config.hpp"
#include "hdp/error.hpp"
#include "hdp/extractor.hpp"
#include "hdp/partition.hpp"
#include "hdp/rftm.hpp"
#include "hdp/training.hpp"

namespace hdp {

// Output layout under the --out directory:
//   corpus/{u,f}/<id>.ppm, clean/<id>.ppm, <id>.labels, <id>.truth.tnsr; corpus/manifest.tsv
//   maps/{u,f}/<id>.tnsr, maps/summary.tsv
//   partition/{HD_u,HD_f,LD_u,LD_f,labeled_u,pretrain_f}.{idx,tnsr}, partition/counts.txt
//     (pixel dumps hold (x - 0.5) / 0.25; pretrain_f holds clean detector-friendly patches)
//   extractor.tnsr, extractor_report.txt, rftm.tnsr, train_report.txt
//   finetune.tnsr, finetune_report.txt
//   gap_report.txt, tsne.tsv, tsne_report.txt
//   sweep.tsv, sweep_summary.txt
//   <command>.config (config echo of the last run of each command)

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t k = 0);

std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& kv);
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

// A required input is absent; the message names the producing command.
class MissingArtifact : public IoError {
 public:
  MissingArtifact(const std::filesystem::path& path, std::string_view producer);
};

std::size_t cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct EstimateSummary {
  std::size_t ok = 0;
  std::size_t failed = 0;
};

// Estimates maps for corpus/u and corpus/f, or for `input` only when given
// (maps written to maps/<input directory name>/).
EstimateSummary cmd_estimate(const PipelineConfig& cfg, const std::filesystem::path& out,
                             std::ostream& log,
                             const std::optional<std::filesystem::path>& input = std::nullopt);

struct PartitionCounts {
  std::size_t u_patches = 0, f_patches = 0;
  std::size_t hd_u = 0, ld_u = 0, hd_f = 0, ld_f = 0;
  std::size_t labeled_u = 0, pretrain_f = 0;
  std::optional<std::size_t> dfui_selected;
};

PartitionCounts cmd_partition(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

TrainReport cmd_train(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

struct FinetuneSummary {
  std::vector<double> accuracy;
  std::vector<double> control_accuracy;
  std::size_t wins = 0;  // repetitions with accuracy >= control
};

FinetuneSummary cmd_finetune(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

GapReport cmd_analyze(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

std::vector<SweepRow> cmd_sweep(const PipelineConfig& cfg, const std::filesystem::path& out, std::ostream& log);

// Best row by accuracy (first on ties) and whether its threshold is medium (0.5 <= T <= 0.7).
struct SweepVerdict {
  std::optional<double> best_threshold;
  bool medium_best = false;
};
SweepVerdict summarize_sweep(const std::vector<SweepRow>& rows);

}  // namespace hdp
