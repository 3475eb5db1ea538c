#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hdp/extractor.hpp"
#include "hdp/rftm.hpp"
#include "hdp/tensor.hpp"

namespace hdp {

enum class CloudTag { kHdF, kHdU, kHdTu, kLdF, kLdU };

std::string_view cloud_tag_name(CloudTag t);  // "HD_f", "HD_u", "HD_tu", "LD_f", "LD_u"
CloudTag parse_cloud_tag(std::string_view s);

// n row vectors of equal width, stored row-major.
struct FeatureCloud {
  CloudTag tag = CloudTag::kHdF;
  std::size_t width = 0;
  std::vector<double> data;

  std::size_t size() const { return width == 0 ? 0 : data.size() / width; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * width, width}; }
  void push(std::span<const double> v);
};

// Global-average-pooled stage-1 features of (n, 3, h, w) patches: ps01 when
// p is null, the residual features otherwise.
FeatureCloud pool_features(const Tensor& pixels, CloudTag tag, const ExtractorWeights& w,
                           const RftmParams* p = nullptr);

FeatureCloud scaled(const FeatureCloud& c, double k);

double sq_distance(std::span<const double> a, std::span<const double> b);

// Median pairwise distance over the union of the clouds. Falls back to the
// mean positive distance when the median is 0; returns 0 when all points coincide.
double median_bandwidth(std::span<const FeatureCloud* const> clouds);

struct MmdResult {
  double value = 0.0;      // max(raw, 0)
  double raw = 0.0;        // unbiased estimate, may be slightly negative
  bool floored = false;    // raw < 0
  double bandwidth = 0.0;
  bool degenerate = false; // every point identical: value 0 by definition
};

// Unbiased squared MMD, Gaussian kernel exp(-|a-b|^2 / (2 sigma^2)). sigma is
// the median heuristic over both clouds unless given. Exactly symmetric in x, y.
MmdResult mmd2(const FeatureCloud& x, const FeatureCloud& y,
               std::optional<double> bandwidth = std::nullopt);

// Linear interpolation between order statistics, q in [0, 1].
double percentile(std::vector<double> values, double q);

struct PermutationTest {
  double observed = 0.0;
  std::vector<double> null;
  double null_p95 = 0.0;
  double p_value = 0.0;  // (1 + #{null >= observed}) / (1 + permutations)
  double bandwidth = 0.0;
};

// Two-sample test: raw MMD of (x, y) against random relabelings of the pooled points.
PermutationTest mmd_permutation_test(const FeatureCloud& x, const FeatureCloud& y,
                                     std::size_t permutations, std::uint64_t seed,
                                     std::optional<double> bandwidth = std::nullopt);

// Gap-closure test on paired clouds (hd_tu[i] is hd_u[i] after transference).
// Statistic: raw MMD(hd_u, hd_f) - raw MMD(hd_tu, hd_f). Null: each pair
// (hd_u[i], hd_tu[i]) swapped with probability 1/2.
PermutationTest gap_margin_test(const FeatureCloud& hd_u, const FeatureCloud& hd_tu,
                                const FeatureCloud& hd_f, std::size_t permutations,
                                std::uint64_t seed, std::optional<double> bandwidth = std::nullopt);

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;
  double learning_rate = 100.0;
  double exaggeration = 4.0;
};

struct TsneResult {
  std::size_t n = 0;
  std::vector<double> points;  // n x 2, row-major
  double kl = 0.0;
  double kl_after_exaggeration = 0.0;
};

inline constexpr std::size_t kTsneMaxPoints = 2000;

// Exact t-SNE of n x d row-major data. `init` (n x 2) replaces the seeded
// N(0, 1e-4^2) initialisation. Sums are accumulated in a fixed-point
// register, so permuting points (with init) permutes the output exactly.
TsneResult tsne_embed(std::span<const double> data, std::size_t n, std::size_t d,
                      const TsneOptions& opts, std::span<const double> init = {});

struct GapReport {
  double mmd_hd_u_f = 0.0;
  double mmd_hd_tu_f = 0.0;
  std::optional<double> mmd_ld_u_f;  // absent when an LD cloud has < 2 points
  double bandwidth = 0.0;
  std::size_t n_hd_f = 0, n_hd_u = 0, n_hd_tu = 0, n_ld_f = 0, n_ld_u = 0;
  bool floored = false;  // any reported value was raised to 0
  bool verdict = false;  // mmd_hd_tu_f < mmd_hd_u_f
  std::optional<double> margin;
  std::optional<double> margin_null_p95;
  std::optional<double> margin_p_value;
  std::size_t permutations = 0;

  bool operator==(const GapReport&) const = default;
};

GapReport gap_report(const FeatureCloud& hd_f, const FeatureCloud& hd_u, const FeatureCloud& hd_tu,
                     const FeatureCloud& ld_f, const FeatureCloud& ld_u);

std::string format_gap_report(const GapReport& r);
GapReport parse_gap_report(const std::string& text);

struct EmbeddingPoint {
  double x = 0.0;
  double y = 0.0;
  std::string tag;
  bool operator==(const EmbeddingPoint&) const = default;
};

// "# x<TAB>y<TAB>tag" header line, then one point per line.
std::string format_embedding(const std::vector<EmbeddingPoint>& pts);
std::vector<EmbeddingPoint> parse_embedding(const std::string& text);

struct SweepRow {
  double threshold = 0.0;
  std::size_t hd_u = 0, hd_f = 0, ld_u = 0, ld_f = 0;
  bool skipped = false;
  std::string note;  // reason for a skip, one word
  double smoothed_kl = 0.0;
  bool verdict = false;
  double mmd_hd_u_f = 0.0;
  double mmd_hd_tu_f = 0.0;
  double accuracy = 0.0;
  double control_accuracy = 0.0;
  bool operator==(const SweepRow&) const = default;
};

std::string format_sweep(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep(const std::string& text);

}  // namespace hdp
