#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdp/imaging.hpp"
#include "hdp/tensor.hpp"

namespace hdp {

// Where a patch came from: the underwater corpus or the detector-friendly one.
enum class SourceTag { kUnderwater, kFriendly };

char tag_char(SourceTag t);
SourceTag parse_tag(std::string_view s);

// How a patch's transmission window is reduced to one number.
enum class Aggregate { kMean, kMin, kMedian };

Aggregate parse_aggregate(std::string_view s);
std::string aggregate_name(Aggregate a);

struct Patch {
  std::string image_id;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t size = 64;
  // Window aggregate of the transmission map (the mean unless configured otherwise).
  float mean_transmission = 0.0f;
  SourceTag tag = SourceTag::kUnderwater;

  bool operator==(const Patch&) const = default;
};

enum class Degradation { kHeavy, kLight };

struct PatchSet {
  Degradation label = Degradation::kHeavy;
  std::vector<Patch> members;
  double threshold = 0.5;
};

// Per-image detector scores and the inclusive selection threshold.
struct DfuiGate {
  std::map<std::string, double> scores;
  double threshold = 60.0;
};

// All fully contained size x size windows on the stride grid, in (y, x) order.
std::vector<Patch> extract_patches(const std::string& image_id, SourceTag tag, const Image& img,
                                   const TransmissionMap& t, std::size_t size, std::size_t stride,
                                   Aggregate agg = Aggregate::kMean);

float aggregate_window(const TransmissionMap& t, std::size_t x, std::size_t y, std::size_t size,
                       Aggregate agg);

// aggregate < T -> heavy, otherwise light. Input order is preserved.
std::pair<PatchSet, PatchSet> split_hd_ld(const std::vector<Patch>& patches, double threshold);

// Ids with score >= threshold, sorted. An empty result is legal.
std::vector<std::string> select_dfui(const DfuiGate& gate);

// Score file: lines "image_id<TAB>AP" with AP in [0, 100].
DfuiGate parse_scores(const std::string& text, double threshold = 60.0);

// `count` index pairs (i into hd_u, j into hd_f), uniform with replacement.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const PatchSet& hd_u,
                                                              const PatchSet& hd_f,
                                                              std::size_t count,
                                                              std::uint64_t seed);

// Pixels of one patch as a (1, 3, size, size) tensor.
Tensor patch_pixels(const Image& img, const Patch& p);

// Class of the label whose window overlaps the patch the most, provided at
// least half of that label's window lies inside the patch.
std::optional<int> patch_class(const Patch& p, const std::vector<SceneLabel>& labels);

// Index lines "image_id x y size mean_t tag".
std::string format_index(const std::vector<Patch>& patches);
std::vector<Patch> parse_index(const std::string& text);

}  // namespace hdp
