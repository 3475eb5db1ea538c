#include "hdp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "hdp/error.hpp"
#include "hdp/io_util.hpp"
#include "hdp/ops.hpp"

namespace hdp {

namespace {

__extension__ typedef __int128 Wide;

// Order-independent accumulator: terms are rounded to a 2^-70 grid and summed
// as integers.
class FixedSum {
 public:
  void add(double v) { acc_ += static_cast<Wide>(v * kScale); }
  double value() const { return static_cast<double>(acc_) / kScale; }

 private:
  static constexpr double kScale = 1180591620717411303424.0;  // 2^70
  Wide acc_ = 0;
};

double gaussian(double sq, double sigma) { return std::exp(-sq / (2.0 * sigma * sigma)); }

// Unbiased MMD^2 of index sets into a kernel accessor k(a, b).
template <typename K>
double mmd_raw(const K& k, std::span<const std::size_t> xi, std::span<const std::size_t> yi) {
  const double m = static_cast<double>(xi.size()), n = static_cast<double>(yi.size());
  auto within = [&](std::span<const std::size_t> s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a) {
      for (std::size_t b = 0; b < s.size(); ++b) {
        if (a != b) acc += k(s[a], s[b]);
      }
    }
    return acc;
  };
  auto across = [&](std::span<const std::size_t> s, std::span<const std::size_t> t) {
    double acc = 0.0;
    for (std::size_t a : s) {
      for (std::size_t b : t) acc += k(a, b);
    }
    return acc;
  };
  const double sxx = within(xi) / (m * (m - 1.0));
  const double syy = within(yi) / (n * (n - 1.0));
  // Both summation orders, so swapping x and y gives the identical value.
  const double sxy = (across(xi, yi) + across(yi, xi)) / 2.0;
  return (sxx + syy) - 2.0 * sxy / (m * n);
}

struct Pooled {
  std::size_t width = 0;
  std::vector<std::span<const double>> rows;
};

Pooled pool(std::span<const FeatureCloud* const> clouds) {
  Pooled p;
  for (const FeatureCloud* c : clouds) {
    if (c->size() == 0) continue;
    if (p.width == 0) p.width = c->width;
    if (c->width != p.width) throw ShapeError("feature clouds differ in width");
    for (std::size_t i = 0; i < c->size(); ++i) p.rows.push_back(c->row(i));
  }
  return p;
}

double median_of_rows(const std::vector<std::span<const double>>& rows) {
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - (rows.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) d.push_back(std::sqrt(sq_distance(rows[i], rows[j])));
  }
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  const std::size_t mid = d.size() / 2;
  const double med = d.size() % 2 == 1 ? d[mid] : (d[mid - 1] + d[mid]) / 2.0;
  if (med > 0.0) return med;
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : d) {
    if (v > 0.0) {
      sum += v;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

// Dense symmetric Gaussian Gram matrix over the pooled rows.
class Gram {
 public:
  Gram(const std::vector<std::span<const double>>& rows, double sigma)
      : n_(rows.size()), k_(n_ * n_, 1.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        const double v = gaussian(sq_distance(rows[i], rows[j]), sigma);
        k_[i * n_ + j] = v;
        k_[j * n_ + i] = v;
      }
    }
  }
  double operator()(std::size_t a, std::size_t b) const { return k_[a * n_ + b]; }

 private:
  std::size_t n_;
  std::vector<double> k_;
};

void need_two(const FeatureCloud& c, const char* what) {
  if (c.size() < 2) {
    throw ParamError(std::string(what) + ": cloud " + std::string(cloud_tag_name(c.tag)) +
                     " has fewer than 2 points");
  }
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : "none"; }

std::optional<double> parse_opt(std::string_view s, std::string_view what) {
  if (s == "none") return std::nullopt;
  return parse_double(s, what);
}

}  // namespace

std::string_view cloud_tag_name(CloudTag t) {
  switch (t) {
    case CloudTag::kHdF: return "HD_f";
    case CloudTag::kHdU: return "HD_u";
    case CloudTag::kHdTu: return "HD_tu";
    case CloudTag::kLdF: return "LD_f";
    case CloudTag::kLdU: return "LD_u";
  }
  return "?";
}

CloudTag parse_cloud_tag(std::string_view s) {
  for (CloudTag t : {CloudTag::kHdF, CloudTag::kHdU, CloudTag::kHdTu, CloudTag::kLdF, CloudTag::kLdU}) {
    if (cloud_tag_name(t) == s) return t;
  }
  throw FormatError("unknown cloud tag '" + std::string(s) + "'");
}

void FeatureCloud::push(std::span<const double> v) {
  if (width == 0 && data.empty()) width = v.size();
  if (v.size() != width) throw ShapeError("FeatureCloud::push: width mismatch");
  data.insert(data.end(), v.begin(), v.end());
}

FeatureCloud pool_features(const Tensor& pixels, CloudTag tag, const ExtractorWeights& w,
                           const RftmParams* p) {
  FeatureCloud cloud;
  cloud.tag = tag;
  cloud.width = w.c1();
  const std::size_t n = pixels.shape().n;
  constexpr std::size_t kChunk = 16;
  for (std::size_t first = 0; first < n; first += kChunk) {
    const Tensor x = pixels.slice(first, std::min(kChunk, n - first));
    const Tensor f = p == nullptr ? ps01_forward(x, w) : residual_forward(x, w, *p).features;
    const Tensor g = global_avg_pool(f);
    cloud.data.insert(cloud.data.end(), g.data().begin(), g.data().end());
  }
  return cloud;
}

FeatureCloud scaled(const FeatureCloud& c, double k) {
  FeatureCloud out = c;
  for (double& v : out.data) v *= k;
  return out;
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("sq_distance: width mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

double median_bandwidth(std::span<const FeatureCloud* const> clouds) {
  return median_of_rows(pool(clouds).rows);
}

MmdResult mmd2(const FeatureCloud& x, const FeatureCloud& y, std::optional<double> bandwidth) {
  need_two(x, "mmd2");
  need_two(y, "mmd2");
  if (x.width != y.width) throw ShapeError("mmd2: clouds differ in width");
  MmdResult r;
  const FeatureCloud* both[] = {&x, &y};
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) throw ParamError("mmd2: bandwidth must be > 0");
    r.bandwidth = *bandwidth;
  } else {
    r.bandwidth = median_bandwidth(both);
    if (r.bandwidth == 0.0) {
      r.degenerate = true;
      return r;
    }
  }
  // Indices below x.size() address x, the rest address y.
  const std::size_t m = x.size();
  auto row = [&](std::size_t i) { return i < m ? x.row(i) : y.row(i - m); };
  auto k = [&](std::size_t a, std::size_t b) {
    return a == b ? 1.0 : gaussian(sq_distance(row(a), row(b)), r.bandwidth);
  };
  std::vector<std::size_t> xi(m), yi(y.size());
  std::iota(xi.begin(), xi.end(), std::size_t{0});
  std::iota(yi.begin(), yi.end(), m);
  r.raw = mmd_raw(k, xi, yi);
  r.floored = r.raw < 0.0;
  r.value = std::max(r.raw, 0.0);
  return r;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ParamError("percentile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ParamError("percentile: q must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

PermutationTest finish(PermutationTest t) {
  t.null_p95 = t.null.empty() ? 0.0 : percentile(t.null, 0.95);
  std::size_t ge = 0;
  for (double v : t.null) ge += v >= t.observed ? 1 : 0;
  t.p_value = static_cast<double>(1 + ge) / static_cast<double>(1 + t.null.size());
  return t;
}

double resolve_bandwidth(std::optional<double> given, std::span<const FeatureCloud* const> clouds) {
  if (given) {
    if (!(*given > 0.0)) throw ParamError("permutation test: bandwidth must be > 0");
    return *given;
  }
  const double bw = median_bandwidth(clouds);
  if (bw == 0.0) throw ParamError("permutation test: all points identical");
  return bw;
}

}  // namespace

PermutationTest mmd_permutation_test(const FeatureCloud& x, const FeatureCloud& y,
                                     std::size_t permutations, std::uint64_t seed,
                                     std::optional<double> bandwidth) {
  need_two(x, "mmd_permutation_test");
  need_two(y, "mmd_permutation_test");
  const FeatureCloud* both[] = {&x, &y};
  PermutationTest t;
  t.bandwidth = resolve_bandwidth(bandwidth, both);
  const Gram gram(pool(both).rows, t.bandwidth);
  const std::size_t m = x.size(), total = x.size() + y.size();
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto stat = [&] {
    return mmd_raw(gram, std::span<const std::size_t>(idx.data(), m),
                   std::span<const std::size_t>(idx.data() + m, total - m));
  };
  t.observed = stat();
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < permutations; ++k) {
    for (std::size_t i = total; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    t.null.push_back(stat());
  }
  return finish(std::move(t));
}

PermutationTest gap_margin_test(const FeatureCloud& hd_u, const FeatureCloud& hd_tu,
                                const FeatureCloud& hd_f, std::size_t permutations,
                                std::uint64_t seed, std::optional<double> bandwidth) {
  need_two(hd_u, "gap_margin_test");
  need_two(hd_f, "gap_margin_test");
  if (hd_tu.size() != hd_u.size()) throw ShapeError("gap_margin_test: HD_tu and HD_u must be paired");
  const FeatureCloud* all[] = {&hd_u, &hd_tu, &hd_f};
  PermutationTest t;
  t.bandwidth = resolve_bandwidth(bandwidth, all);
  const Gram gram(pool(all).rows, t.bandwidth);
  const std::size_t m = hd_u.size();
  std::vector<std::size_t> u(m), tu(m), f(hd_f.size());
  std::iota(u.begin(), u.end(), std::size_t{0});
  std::iota(tu.begin(), tu.end(), m);
  std::iota(f.begin(), f.end(), 2 * m);
  auto stat = [&] { return mmd_raw(gram, u, f) - mmd_raw(gram, tu, f); };
  t.observed = stat();
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < permutations; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      const bool swap = (rng() >> 63) != 0;
      u[i] = swap ? m + i : i;
      tu[i] = swap ? i : m + i;
    }
    t.null.push_back(stat());
  }
  return finish(std::move(t));
}

TsneResult tsne_embed(std::span<const double> data, std::size_t n, std::size_t d,
                      const TsneOptions& opts, std::span<const double> init) {
  if (data.size() != n * d) throw ShapeError("tsne_embed: data length is not n * d");
  if (n < 5) throw ParamError("tsne_embed: need at least 5 points");
  if (n > kTsneMaxPoints) {
    throw ParamError("tsne_embed: " + std::to_string(n) + " points exceeds the exact-method limit of " +
                     std::to_string(kTsneMaxPoints));
  }
  if (!(opts.perplexity > 0.0) || !(opts.perplexity < static_cast<double>(n - 1) / 3.0)) {
    throw ParamError("tsne_embed: perplexity " + fmt_num(opts.perplexity) + " infeasible for " +
                     std::to_string(n) + " points (needs 0 < perplexity < (n - 1) / 3)");
  }
  if (!init.empty() && init.size() != 2 * n) throw ShapeError("tsne_embed: init must be n x 2");

  // Squared distances.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = sq_distance(data.subspan(i * d, d), data.subspan(j * d, d));
      dist[i * n + j] = v;
      dist[j * n + i] = v;
    }
  }

  // Conditional affinities with bisection on the Gaussian precision.
  std::vector<double> cond(n * n, 0.0);
  const double target = std::log(opts.perplexity);
  for (std::size_t i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, dist[i * n + j]);
    }
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double* row = cond.data() + i * n;
    for (int step = 0; step < 200; ++step) {
      FixedSum sum, weighted;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-(dist[i * n + j] - dmin) * beta);
        sum.add(row[j]);
        weighted.add((dist[i * n + j] - dmin) * row[j]);
      }
      const double s = sum.value();
      const double h = std::log(s) + beta * weighted.value() / s;
      for (std::size_t j = 0; j < n; ++j) row[j] /= s;
      const double diff = h - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
  }
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
    }
  }
  cond.clear();
  cond.shrink_to_fit();

  TsneResult res;
  res.n = n;
  res.points.resize(2 * n);
  if (init.empty()) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1e-4);
    for (double& v : res.points) v = normal(rng);
  } else {
    std::copy(init.begin(), init.end(), res.points.begin());
  }
  std::vector<double>& y = res.points;
  std::vector<double> num(n * n, 0.0), grad(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0);

  auto compute_num = [&] {
    FixedSum z;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = v;
        num[j * n + i] = v;
        z.add(v);
      }
    }
    return 2.0 * z.value();
  };
  auto kl = [&] {
    const double z = compute_num();
    FixedSum acc;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = std::max(num[i * n + j] / z, 1e-12);
        acc.add(p[i * n + j] * std::log(p[i * n + j] / q));
      }
    }
    return acc.value();
  };

  const std::size_t stop = opts.iterations / 4;
  if (stop == 0) res.kl_after_exaggeration = kl();
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    const bool early = it < stop;
    const double exag = early ? opts.exaggeration : 1.0;
    const double momentum = early ? 0.5 : 0.8;
    const double z = compute_num();
    for (std::size_t i = 0; i < n; ++i) {
      FixedSum gx, gy;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double nij = num[i * n + j];
        const double mult = (exag * p[i * n + j] - nij / z) * nij;
        gx.add(mult * (y[2 * i] - y[2 * j]));
        gy.add(mult * (y[2 * i + 1] - y[2 * j + 1]));
      }
      grad[2 * i] = 4.0 * gx.value();
      grad[2 * i + 1] = 4.0 * gy.value();
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      gains[k] = (grad[k] > 0.0) != (update[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - opts.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    FixedSum mx, my;
    for (std::size_t i = 0; i < n; ++i) {
      mx.add(y[2 * i]);
      my.add(y[2 * i + 1]);
    }
    const double cx = mx.value() / static_cast<double>(n), cy = my.value() / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= cx;
      y[2 * i + 1] -= cy;
    }
    if (it + 1 == stop) res.kl_after_exaggeration = kl();
  }
  res.kl = kl();
  return res;
}

GapReport gap_report(const FeatureCloud& hd_f, const FeatureCloud& hd_u, const FeatureCloud& hd_tu,
                     const FeatureCloud& ld_f, const FeatureCloud& ld_u) {
  need_two(hd_f, "gap_report");
  need_two(hd_u, "gap_report");
  need_two(hd_tu, "gap_report");
  const FeatureCloud* all[] = {&hd_f, &hd_u, &hd_tu, &ld_f, &ld_u};
  GapReport r;
  r.bandwidth = median_bandwidth(all);
  if (r.bandwidth == 0.0) throw ParamError("gap_report: all feature vectors are identical");
  r.n_hd_f = hd_f.size();
  r.n_hd_u = hd_u.size();
  r.n_hd_tu = hd_tu.size();
  r.n_ld_f = ld_f.size();
  r.n_ld_u = ld_u.size();
  const MmdResult a = mmd2(hd_u, hd_f, r.bandwidth);
  const MmdResult b = mmd2(hd_tu, hd_f, r.bandwidth);
  r.mmd_hd_u_f = a.value;
  r.mmd_hd_tu_f = b.value;
  r.floored = a.floored || b.floored;
  if (ld_f.size() >= 2 && ld_u.size() >= 2) {
    const MmdResult c = mmd2(ld_u, ld_f, r.bandwidth);
    r.mmd_ld_u_f = c.value;
    r.floored = r.floored || c.floored;
  }
  r.verdict = r.mmd_hd_tu_f < r.mmd_hd_u_f;
  return r;
}

std::string format_gap_report(const GapReport& r) {
  std::string out;
  out += "mmd_hd_u_f=" + fmt_num(r.mmd_hd_u_f) + "\n";
  out += "mmd_hd_tu_f=" + fmt_num(r.mmd_hd_tu_f) + "\n";
  out += "mmd_ld_u_f=" + fmt_opt(r.mmd_ld_u_f) + "\n";
  out += "bandwidth=" + fmt_num(r.bandwidth) + "\n";
  out += "n_hd_f=" + std::to_string(r.n_hd_f) + "\n";
  out += "n_hd_u=" + std::to_string(r.n_hd_u) + "\n";
  out += "n_hd_tu=" + std::to_string(r.n_hd_tu) + "\n";
  out += "n_ld_f=" + std::to_string(r.n_ld_f) + "\n";
  out += "n_ld_u=" + std::to_string(r.n_ld_u) + "\n";
  out += std::string("floored=") + (r.floored ? "yes" : "no") + "\n";
  out += std::string("verdict=") + (r.verdict ? "yes" : "no") + "\n";
  out += "margin=" + fmt_opt(r.margin) + "\n";
  out += "margin_null_p95=" + fmt_opt(r.margin_null_p95) + "\n";
  out += "margin_p_value=" + fmt_opt(r.margin_p_value) + "\n";
  out += "permutations=" + std::to_string(r.permutations) + "\n";
  return out;
}

GapReport parse_gap_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  for (const std::string& raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("gap report: expected key=value, got '" + std::string(line) + "'");
    if (!kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1))).second) {
      throw FormatError("gap report: duplicate key '" + std::string(line.substr(0, eq)) + "'");
    }
  }
  auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("gap report: missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto flag = [&](const std::string& key) {
    const std::string v = take(key);
    if (v != "yes" && v != "no") throw FormatError("gap report: " + key + " must be yes or no");
    return v == "yes";
  };
  auto count = [&](const std::string& key) { return static_cast<std::size_t>(parse_int(take(key), key)); };
  GapReport r;
  r.mmd_hd_u_f = parse_double(take("mmd_hd_u_f"), "mmd_hd_u_f");
  r.mmd_hd_tu_f = parse_double(take("mmd_hd_tu_f"), "mmd_hd_tu_f");
  r.mmd_ld_u_f = parse_opt(take("mmd_ld_u_f"), "mmd_ld_u_f");
  r.bandwidth = parse_double(take("bandwidth"), "bandwidth");
  r.n_hd_f = count("n_hd_f");
  r.n_hd_u = count("n_hd_u");
  r.n_hd_tu = count("n_hd_tu");
  r.n_ld_f = count("n_ld_f");
  r.n_ld_u = count("n_ld_u");
  r.floored = flag("floored");
  r.verdict = flag("verdict");
  r.margin = parse_opt(take("margin"), "margin");
  r.margin_null_p95 = parse_opt(take("margin_null_p95"), "margin_null_p95");
  r.margin_p_value = parse_opt(take("margin_p_value"), "margin_p_value");
  r.permutations = count("permutations");
  if (!kv.empty()) throw FormatError("gap report: unknown key '" + kv.begin()->first + "'");
  return r;
}

std::string format_embedding(const std::vector<EmbeddingPoint>& pts) {
  std::string out = "# x\ty\ttag\n";
  for (const auto& p : pts) {
    if (p.tag.empty() || p.tag.find_first_of(" \t\r\n") != std::string::npos) {
      throw ParamError("embedding tag must be a non-empty word");
    }
    out += fmt_num(p.x) + "\t" + fmt_num(p.y) + "\t" + p.tag + "\n";
  }
  return out;
}

std::vector<EmbeddingPoint> parse_embedding(const std::string& text) {
  std::vector<EmbeddingPoint> pts;
  for (const std::string& raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_ws(line);
    if (f.size() != 3) throw FormatError("embedding: expected 3 fields, got '" + std::string(line) + "'");
    pts.push_back({parse_double(f[0], "x"), parse_double(f[1], "y"), std::string(f[2])});
  }
  return pts;
}

namespace {

constexpr const char* kSweepHeader =
    "# T\thd_u\thd_f\tld_u\tld_f\tstatus\tsmoothed_kl\tmmd_hd_u_f\tmmd_hd_tu_f\tverdict\taccuracy\tcontrol_accuracy";

}  // namespace

std::string format_sweep(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt_num(r.threshold) + "\t" + std::to_string(r.hd_u) + "\t" + std::to_string(r.hd_f) + "\t" +
           std::to_string(r.ld_u) + "\t" + std::to_string(r.ld_f) + "\t";
    if (r.skipped) {
      if (r.note.empty() || r.note.find_first_of(" \t\r\n") != std::string::npos) {
        throw ParamError("sweep: skip note must be a non-empty word");
      }
      out += "skipped:" + r.note + "\t-\t-\t-\t-\t-\t-\n";
    } else {
      out += "ok\t" + fmt_num(r.smoothed_kl) + "\t" + fmt_num(r.mmd_hd_u_f) + "\t" + fmt_num(r.mmd_hd_tu_f) +
             "\t" + (r.verdict ? "yes" : "no") + "\t" + fmt_num(r.accuracy) + "\t" +
             fmt_num(r.control_accuracy) + "\n";
    }
  }
  return out;
}

std::vector<SweepRow> parse_sweep(const std::string& text) {
  std::vector<SweepRow> rows;
  for (const std::string& raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_ws(line);
    if (f.size() != 12) throw FormatError("sweep: expected 12 fields, got '" + std::string(line) + "'");
    SweepRow r;
    r.threshold = parse_double(f[0], "T");
    r.hd_u = static_cast<std::size_t>(parse_int(f[1], "hd_u"));
    r.hd_f = static_cast<std::size_t>(parse_int(f[2], "hd_f"));
    r.ld_u = static_cast<std::size_t>(parse_int(f[3], "ld_u"));
    r.ld_f = static_cast<std::size_t>(parse_int(f[4], "ld_f"));
    if (f[5].rfind("skipped:", 0) == 0) {
      r.skipped = true;
      r.note = std::string(f[5].substr(8));
      for (std::size_t k = 6; k < 12; ++k) {
        if (f[k] != "-") throw FormatError("sweep: skipped row carries values");
      }
    } else if (f[5] == "ok") {
      r.smoothed_kl = parse_double(f[6], "smoothed_kl");
      r.mmd_hd_u_f = parse_double(f[7], "mmd_hd_u_f");
      r.mmd_hd_tu_f = parse_double(f[8], "mmd_hd_tu_f");
      if (f[9] != "yes" && f[9] != "no") throw FormatError("sweep: verdict must be yes or no");
      r.verdict = f[9] == "yes";
      r.accuracy = parse_double(f[10], "accuracy");
      r.control_accuracy = parse_double(f[11], "control_accuracy");
    } else {
      throw FormatError("sweep: bad status '" + std::string(f[5]) + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace hdp
