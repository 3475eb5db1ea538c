#include "hdp/partition.hpp"

#include <algorithm>
#include <random>

#include "hdp/error.hpp"
#include "hdp/io_util.hpp"

namespace hdp {

char tag_char(SourceTag t) { return t == SourceTag::kUnderwater ? 'u' : 'f'; }

SourceTag parse_tag(std::string_view s) {
  if (s == "u") return SourceTag::kUnderwater;
  if (s == "f") return SourceTag::kFriendly;
  throw FormatError("unknown source tag '" + std::string(s) + "' (expected u or f)");
}

Aggregate parse_aggregate(std::string_view s) {
  if (s == "mean") return Aggregate::kMean;
  if (s == "min") return Aggregate::kMin;
  if (s == "median") return Aggregate::kMedian;
  throw ParamError("unknown transmission aggregate '" + std::string(s) + "'");
}

std::string aggregate_name(Aggregate a) {
  switch (a) {
    case Aggregate::kMean: return "mean";
    case Aggregate::kMin: return "min";
    case Aggregate::kMedian: return "median";
  }
  return "mean";
}

float aggregate_window(const TransmissionMap& t, std::size_t x, std::size_t y, std::size_t size,
                       Aggregate agg) {
  if (x + size > t.width() || y + size > t.height()) {
    throw ParamError("patch window exceeds transmission map");
  }
  if (agg == Aggregate::kMean) {
    double sum = 0.0;
    for (std::size_t yy = y; yy < y + size; ++yy) {
      for (std::size_t xx = x; xx < x + size; ++xx) sum += t.at(yy, xx);
    }
    return static_cast<float>(sum / static_cast<double>(size * size));
  }
  std::vector<float> vals;
  vals.reserve(size * size);
  for (std::size_t yy = y; yy < y + size; ++yy) {
    for (std::size_t xx = x; xx < x + size; ++xx) vals.push_back(t.at(yy, xx));
  }
  if (agg == Aggregate::kMin) return *std::min_element(vals.begin(), vals.end());
  // Lower median for even counts keeps the value an element of the window.
  auto mid = vals.begin() + static_cast<std::ptrdiff_t>((vals.size() - 1) / 2);
  std::nth_element(vals.begin(), mid, vals.end());
  return *mid;
}

std::vector<Patch> extract_patches(const std::string& image_id, SourceTag tag, const Image& img,
                                   const TransmissionMap& t, std::size_t size, std::size_t stride,
                                   Aggregate agg) {
  if (img.height() != t.height() || img.width() != t.width()) {
    throw ShapeError("extract_patches: image and transmission map differ in size");
  }
  if (size == 0 || size > std::min(img.height(), img.width())) {
    throw ParamError("patch size " + std::to_string(size) + " exceeds image " +
                     std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  if (stride == 0) throw ParamError("patch stride must be >= 1");
  std::vector<Patch> out;
  for (std::size_t y = 0; y + size <= img.height(); y += stride) {
    for (std::size_t x = 0; x + size <= img.width(); x += stride) {
      out.push_back(Patch{image_id, x, y, size, aggregate_window(t, x, y, size, agg), tag});
    }
  }
  return out;
}

std::pair<PatchSet, PatchSet> split_hd_ld(const std::vector<Patch>& patches, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ParamError("threshold T must lie in [0, 1], got " + fmt_num(threshold));
  }
  PatchSet hd{Degradation::kHeavy, {}, threshold};
  PatchSet ld{Degradation::kLight, {}, threshold};
  for (const auto& p : patches) {
    if (static_cast<double>(p.mean_transmission) < threshold) {
      hd.members.push_back(p);
    } else {
      ld.members.push_back(p);
    }
  }
  return {std::move(hd), std::move(ld)};
}

std::vector<std::string> select_dfui(const DfuiGate& gate) {
  if (gate.scores.empty()) throw ParamError("DFUI gate: score table is empty");
  if (!(gate.threshold >= 0.0)) throw ParamError("DFUI gate: threshold must be >= 0");
  std::vector<std::string> ids;
  for (const auto& [id, ap] : gate.scores) {
    if (ap >= gate.threshold) ids.push_back(id);
  }
  return ids;  // std::map iteration is already sorted by id
}

DfuiGate parse_scores(const std::string& text, double threshold) {
  DfuiGate gate;
  gate.threshold = threshold;
  for (const auto& raw : split_lines(text)) {
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw FormatError("score line must be 'image_id<TAB>AP': '" + std::string(line) + "'");
    }
    const std::string id(trim(line.substr(0, tab)));
    const double ap = parse_double(line.substr(tab + 1), "AP");
    if (id.empty()) throw FormatError("score line has empty image id");
    if (!(ap >= 0.0 && ap <= 100.0)) {
      throw FormatError("AP for '" + id + "' outside [0, 100]: " + fmt_num(ap));
    }
    if (!gate.scores.emplace(id, ap).second) throw FormatError("duplicate score for '" + id + "'");
  }
  return gate;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const PatchSet& hd_u,
                                                              const PatchSet& hd_f,
                                                              std::size_t count,
                                                              std::uint64_t seed) {
  if (hd_u.members.empty() || hd_f.members.empty()) {
    throw ParamError("sample_pairs: both patch sets must be non-empty (HD_u=" +
                     std::to_string(hd_u.members.size()) +
                     ", HD_f=" + std::to_string(hd_f.members.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> du(0, hd_u.members.size() - 1);
  std::uniform_int_distribution<std::size_t> df(0, hd_f.members.size() - 1);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = du(rng);
    const std::size_t j = df(rng);
    out.emplace_back(i, j);
  }
  return out;
}

Tensor patch_pixels(const Image& img, const Patch& p) {
  if (p.x + p.size > img.width() || p.y + p.size > img.height()) {
    throw ShapeError("patch at (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                     ") size " + std::to_string(p.size) + " exceeds image");
  }
  Tensor t(Shape{1, 3, p.size, p.size});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < p.size; ++y) {
      for (std::size_t x = 0; x < p.size; ++x) t.at(0, c, y, x) = img.at(c, p.y + y, p.x + x);
    }
  }
  return t;
}

std::optional<int> patch_class(const Patch& p, const std::vector<SceneLabel>& labels) {
  std::optional<int> best;
  std::size_t best_overlap = 0;
  for (const auto& l : labels) {
    const std::size_t x0 = std::max(p.x, l.x), y0 = std::max(p.y, l.y);
    const std::size_t x1 = std::min(p.x + p.size, l.x + l.w);
    const std::size_t y1 = std::min(p.y + p.size, l.y + l.h);
    if (x1 <= x0 || y1 <= y0) continue;
    const std::size_t overlap = (x1 - x0) * (y1 - y0);
    if (2 * overlap >= l.w * l.h && overlap > best_overlap) {
      best_overlap = overlap;
      best = l.class_id;
    }
  }
  return best;
}

std::string format_index(const std::vector<Patch>& patches) {
  std::string out;
  for (const auto& p : patches) {
    out += p.image_id + " " + std::to_string(p.x) + " " + std::to_string(p.y) + " " +
           std::to_string(p.size) + " " + fmt_num(p.mean_transmission) + " " + tag_char(p.tag) + "\n";
  }
  return out;
}

std::vector<Patch> parse_index(const std::string& text) {
  std::vector<Patch> out;
  for (const auto& line : split_lines(text)) {
    const auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 6) throw FormatError("index line needs 6 fields: '" + line + "'");
    Patch p;
    p.image_id = std::string(f[0]);
    const long long x = parse_int(f[1], "x"), y = parse_int(f[2], "y"), s = parse_int(f[3], "size");
    if (x < 0 || y < 0 || s <= 0) throw FormatError("invalid patch window: '" + line + "'");
    p.x = static_cast<std::size_t>(x);
    p.y = static_cast<std::size_t>(y);
    p.size = static_cast<std::size_t>(s);
    p.mean_transmission = parse_float(f[4], "mean_t");
    p.tag = parse_tag(f[5]);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace hdp
