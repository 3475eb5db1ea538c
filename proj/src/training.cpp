#include "hdp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "hdp/error.hpp"
#include "hdp/io_util.hpp"
#include "hdp/optim.hpp"

namespace hdp {

namespace {

constexpr std::size_t kChunk = 16;
constexpr std::size_t kHashCheckEvery = 100;
constexpr std::size_t kDivergeRun = 50;
constexpr double kDivergeFactor = 10.0;

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// Applies fn to consecutive batch chunks of x and stacks the results.
template <typename Fn>
Tensor map_chunks(const Tensor& x, Fn fn) {
  const std::size_t n = x.shape().n;
  Tensor out;
  for (std::size_t first = 0; first < n; first += kChunk) {
    const std::size_t count = std::min(kChunk, n - first);
    const Tensor part = fn(x.slice(first, count));
    if (first == 0) {
      Shape s = part.shape();
      s.n = n;
      out = Tensor(s);
    }
    std::copy(part.data().begin(), part.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(first * part.shape().numel() / count));
  }
  return out;
}

Tensor gather(const Tensor& src, const std::vector<std::size_t>& rows) {
  Shape s = src.shape();
  const std::size_t per = s.c * s.h * s.w;
  s.n = rows.size();
  Tensor out(s);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(rows[k] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return out;
}

void check_bank(const PatchBank& b, const char* name) {
  if (b.set.members.empty()) throw ParamError(std::string("train_rftm: ") + name + " is empty");
  if (b.pixels.shape().n != b.set.members.size()) {
    throw ShapeError(std::string("train_rftm: ") + name + " has " + std::to_string(b.set.members.size()) +
                     " patches but pixels " + b.pixels.shape().str());
  }
}

std::vector<std::span<float>> rftm_buffers(RftmParams& p) {
  std::vector<std::span<float>> out;
  for (auto& c : p.convs) {
    out.push_back(c.weights.data());
    out.push_back(std::span<float>(c.bias));
  }
  return out;
}

double accuracy(const Tensor& features, const std::vector<int>& labels,
                const std::vector<std::size_t>& rows, const FinetuneModel& m) {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < rows.size(); first += 32) {
    const std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(first),
                                        rows.begin() + static_cast<std::ptrdiff_t>(std::min(first + 32, rows.size())));
    const auto pred = argmax_rows(finetune_logits(gather(features, part), m));
    for (std::size_t k = 0; k < part.size(); ++k) correct += pred[k] == labels[part[k]] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParamError("train: learning rate must be > 0");
  if (!(finetune_lr > 0.0) || !std::isfinite(finetune_lr)) {
    throw ParamError("train: finetune learning rate must be > 0");
  }
  if (batch < 1) throw ParamError("train: batch size must be >= 1");
  if (finetune_batch < 2) throw ParamError("train: finetune batch size must be >= 2");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParamError("train: momentum must be in [0, 1)");
  if (!(kl_epsilon > 0.0)) throw ParamError("train: KL epsilon must be > 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParamError("train: temperature must be > 0");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ParamError("train: holdout fraction must be in (0, 1)");
  }
}

std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& cfg) {
  return {
      {"lr", fmt_num(cfg.lr)},
      {"batch", std::to_string(cfg.batch)},
      {"momentum", fmt_num(cfg.momentum)},
      {"stage1_iters", std::to_string(cfg.stage1_iters)},
      {"stage2_iters", std::to_string(cfg.stage2_iters)},
      {"seed", std::to_string(cfg.seed)},
      {"kl_epsilon", fmt_num(cfg.kl_epsilon)},
      {"temperature", fmt_num(cfg.temperature)},
      {"finetune_lr", fmt_num(cfg.finetune_lr)},
      {"finetune_batch", std::to_string(cfg.finetune_batch)},
      {"holdout_fraction", fmt_num(cfg.holdout_fraction)},
  };
}

KlResult kl_loss(const Tensor& target, const Tensor& transferred, double epsilon, double temperature) {
  if (target.shape() != transferred.shape()) {
    throw ShapeError("kl_loss: target " + target.shape().str() + " vs transferred " +
                     transferred.shape().str());
  }
  if (!(epsilon > 0.0)) throw ParamError("kl_loss: epsilon must be > 0");
  if (!(temperature > 0.0)) throw ParamError("kl_loss: temperature must be > 0");
  if (!target.all_finite() || !transferred.all_finite()) {
    throw ValueError("kl_loss: non-finite feature value");
  }
  const std::size_t n = target.shape().n;
  const std::size_t m = n == 0 ? 0 : target.numel() / n;
  KlResult r{0.0, Tensor(target.shape())};
  if (n == 0) return r;
  const double log_eps = std::log(epsilon);
  std::vector<double> logp(m), logq(m);

  auto log_softmax = [&](const float* z, std::vector<double>& out) {
    double zmax = z[0];
    for (std::size_t k = 1; k < m; ++k) zmax = std::max(zmax, static_cast<double>(z[k]));
    double sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) sum += std::exp((z[k] - zmax) / temperature);
    const double lse = std::log(sum);
    for (std::size_t k = 0; k < m; ++k) out[k] = (z[k] - zmax) / temperature - lse;
  };

  for (std::size_t s = 0; s < n; ++s) {
    log_softmax(target.data().data() + s * m, logp);
    log_softmax(transferred.data().data() + s * m, logq);
    double loss = 0.0, kept_mass = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double p = std::exp(logp[k]);
      const bool kept = logq[k] >= log_eps;
      loss += p * (logp[k] - (kept ? logq[k] : log_eps));
      if (kept) kept_mass += p;
    }
    r.loss += loss;
    float* g = r.grad.data().data() + s * m;
    const double scale = 1.0 / (temperature * static_cast<double>(n));
    for (std::size_t k = 0; k < m; ++k) {
      const double p = std::exp(logp[k]);
      const bool kept = logq[k] >= log_eps;
      g[k] = static_cast<float>((std::exp(logq[k]) * kept_mass - (kept ? p : 0.0)) * scale);
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

double TrainReport::initial_loss() const { return trace.empty() ? 0.0 : trace.front(); }
double TrainReport::final_loss() const { return trace.empty() ? 0.0 : trace.back(); }

std::optional<std::string> TrainReport::metric(const std::string& key) const {
  for (const auto& [k, v] : metrics) {
    if (k == key) return v;
  }
  return std::nullopt;
}

double window_mean(const std::vector<double>& trace, std::size_t first, std::size_t window) {
  if (first >= trace.size() || window == 0) return 0.0;
  const std::size_t last = std::min(trace.size(), first + window);
  double sum = 0.0;
  for (std::size_t k = first; k < last; ++k) sum += trace[k];
  return sum / static_cast<double>(last - first);
}

double smoothed_start(const std::vector<double>& trace, std::size_t window) {
  return window_mean(trace, 0, window);
}

double smoothed_end(const std::vector<double>& trace, std::size_t window) {
  const std::size_t first = trace.size() > window ? trace.size() - window : 0;
  return window_mean(trace, first, window);
}

std::string format_report(const TrainReport& r) {
  std::string out = "# iter\tloss\n";
  for (std::size_t k = 0; k < r.trace.size(); ++k) {
    out += std::to_string(k) + "\t" + fmt_num(r.trace[k]) + "\n";
  }
  out += "# summary\n";
  out += "stage=" + r.stage + "\n";
  out += "seed=" + std::to_string(r.seed) + "\n";
  out += "iterations=" + std::to_string(r.trace.size()) + "\n";
  out += "initial_loss=" + fmt_num(r.initial_loss()) + "\n";
  out += "final_loss=" + fmt_num(r.final_loss()) + "\n";
  for (const auto& [k, v] : r.config) out += "config." + k + "=" + v + "\n";
  for (const auto& [k, v] : r.metrics) out += "metric." + k + "=" + v + "\n";
  return out;
}

TrainReport parse_report(const std::string& text) {
  TrainReport r;
  bool in_summary = false;
  std::optional<std::size_t> iterations;
  for (const std::string& raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line == "# summary") {
      in_summary = true;
      continue;
    }
    if (line.front() == '#') continue;
    if (!in_summary) {
      const auto fields = split_ws(line);
      if (fields.size() != 2) throw FormatError("report: bad trace line '" + std::string(line) + "'");
      const auto iter = parse_int(fields[0], "report iteration");
      if (iter != static_cast<long long>(r.trace.size())) {
        throw FormatError("report: trace iterations out of order at " + std::string(fields[0]));
      }
      r.trace.push_back(parse_double(fields[1], "report loss"));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("report: expected key=value, got '" + std::string(line) + "'");
    const std::string key(line.substr(0, eq));
    const std::string value(line.substr(eq + 1));
    if (key == "stage") {
      r.stage = value;
    } else if (key == "seed") {
      r.seed = parse_u64(value, "report seed");
    } else if (key == "iterations") {
      iterations = static_cast<std::size_t>(parse_int(value, "report iterations"));
    } else if (key == "initial_loss" || key == "final_loss") {
      parse_double(value, key);
    } else if (key.rfind("config.", 0) == 0) {
      r.config.emplace_back(key.substr(7), value);
    } else if (key.rfind("metric.", 0) == 0) {
      r.metrics.emplace_back(key.substr(7), value);
    } else {
      throw FormatError("report: unknown key '" + key + "'");
    }
  }
  if (!in_summary) throw FormatError("report: missing summary block");
  if (iterations && *iterations != r.trace.size()) {
    throw FormatError("report: iterations=" + std::to_string(*iterations) + " but trace has " +
                      std::to_string(r.trace.size()) + " lines");
  }
  return r;
}

Stage1Result train_rftm(const PatchBank& hd_u, const PatchBank& hd_f, const ExtractorWeights& w,
                        const RftmParams& p0, const TrainConfig& cfg) {
  cfg.validate();
  check_bank(hd_u, "HD_u");
  check_bank(hd_f, "HD_f");
  if (!w.frozen) throw StateError("train_rftm: extractor weights must be frozen");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t w_hash = w.hash();

  Stage1Result res{p0, TrainReport{}};
  TrainReport& rep = res.report;
  rep.stage = "stage1";
  rep.seed = cfg.seed;
  rep.config = config_echo(cfg);

  if (cfg.stage1_iters > 0) {
    // The extractor is frozen, so stage outputs are computed once per patch.
    const Tensor f0_u = map_chunks(hd_u.pixels, [&](const Tensor& x) { return ps0_forward(x, w); });
    const Tensor base_u = map_chunks(f0_u, [&](const Tensor& x) { return ps1_forward(x, w); });
    const Tensor target_f = map_chunks(hd_f.pixels, [&](const Tensor& x) { return ps01_forward(x, w); });

    const auto pairs = sample_pairs(hd_u.set, hd_f.set, cfg.stage1_iters * cfg.batch, cfg.seed);
    Sgd opt(cfg.lr, cfg.momentum);
    std::vector<std::size_t> rows_u(cfg.batch), rows_f(cfg.batch);
    std::size_t above = 0;
    for (std::size_t it = 0; it < cfg.stage1_iters; ++it) {
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        rows_u[b] = pairs[it * cfg.batch + b].first;
        rows_f[b] = pairs[it * cfg.batch + b].second;
      }
      const ResidualOutput out = residual_from_stages(gather(f0_u, rows_u), gather(base_u, rows_u), res.params);
      if (!out.features.all_finite()) {
        throw TrainingError("train_rftm: non-finite features at iteration " + std::to_string(it));
      }
      const KlResult kl = kl_loss(gather(target_f, rows_f), out.features, cfg.kl_epsilon, cfg.temperature);
      if (!std::isfinite(kl.loss)) {
        throw TrainingError("train_rftm: non-finite loss at iteration " + std::to_string(it));
      }
      rep.trace.push_back(kl.loss);
      above = kl.loss > kDivergeFactor * rep.trace.front() ? above + 1 : 0;
      if (above >= kDivergeRun) {
        throw TrainingError("train_rftm: loss above " + fmt_num(kDivergeFactor) + "x initial for " +
                            std::to_string(kDivergeRun) + " iterations, ending at iteration " +
                            std::to_string(it));
      }

      const RftmGrads g = rftm_backward(out.cache, kl.grad, res.params);
      std::vector<std::span<const float>> grads;
      for (const auto& c : g.convs) {
        grads.push_back(c.weights.data());
        grads.push_back(std::span<const float>(c.bias));
      }
      opt.step(rftm_buffers(res.params), grads);

      if ((it + 1) % kHashCheckEvery == 0 && w.hash() != w_hash) {
        throw StateError("train_rftm: extractor weights changed by iteration " + std::to_string(it));
      }
    }
  }
  if (w.hash() != w_hash) throw StateError("train_rftm: extractor weights changed");

  rep.metrics = {
      {"hd_u", std::to_string(hd_u.set.members.size())},
      {"hd_f", std::to_string(hd_f.set.members.size())},
      {"smoothed_start", fmt_num(smoothed_start(rep.trace, 50))},
      {"smoothed_end", fmt_num(smoothed_end(rep.trace, 50))},
      {"extractor_hash", hex64(w_hash)},
      {"rftm_hash", hex64(res.params.hash())},
  };
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::uint64_t FinetuneModel::hash() const {
  const std::uint64_t h = fnv1a(norm.inv_std, fnv1a(norm.mean, fs.hash()));
  return fnv1a(head.bias, fnv1a(head.weights, h));
}

FinetuneModel init_finetune(std::size_t c1, std::size_t classes, std::uint64_t seed) {
  if (classes < 2) throw ParamError("init_finetune: need at least 2 classes");
  std::mt19937_64 rng(seed);
  FinetuneModel m;
  m.fs = make_conv(c1, c1, 3, rng);
  m.head = init_head(c1, classes, rng);
  m.norm = FeatureStats{std::vector<float>(c1, 0.0f), std::vector<float>(c1, 1.0f)};
  return m;
}

Tensor finetune_logits(const Tensor& features, const FinetuneModel& m) {
  return head_forward(standardize_with(global_avg_pool(relu(conv2d(features, m.fs))), m.norm), m.head);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double holdout,
                                                                            std::uint64_t seed) {
  if (!(holdout > 0.0 && holdout < 1.0)) throw ParamError("split_indices: holdout must be in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t k = n; k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(rng() % k);
    std::swap(order[k - 1], order[j]);
  }
  std::size_t held = static_cast<std::size_t>(std::llround(holdout * static_cast<double>(n)));
  if (n >= 2) held = std::clamp<std::size_t>(held, 1, n - 1);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

FinetuneResult finetune(const LabeledPatches& data, const ExtractorWeights& w, const RftmParams& p,
                        const FinetuneModel& init, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.pixels.shape().n;
  if (data.labels.size() != n) throw ShapeError("finetune: label count differs from patches");
  const std::set<int> distinct(data.labels.begin(), data.labels.end());
  if (distinct.size() < 2) throw ParamError("finetune: need at least 2 classes");
  if (*distinct.begin() < 0 || static_cast<std::size_t>(*distinct.rbegin()) >= init.head.classes) {
    throw ParamError("finetune: labels outside the head's " + std::to_string(init.head.classes) + " classes");
  }
  if (!w.frozen) throw StateError("finetune: extractor weights must be frozen");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t w_hash = w.hash(), p_hash = p.hash();

  // Extractor and RFTM are frozen, so the residual features are fixed.
  const Tensor features =
      map_chunks(data.pixels, [&](const Tensor& x) { return residual_forward(x, w, p).features; });
  const auto [train, test] = split_indices(n, cfg.holdout_fraction, cfg.seed);

  FinetuneResult res{init, TrainReport{}, 0.0, train.size(), test.size()};
  TrainReport& rep = res.report;
  rep.stage = "stage2";
  rep.seed = cfg.seed;
  rep.config = config_echo(cfg);

  FinetuneModel& m = res.model;
  Sgd opt(cfg.finetune_lr, cfg.momentum);
  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<std::size_t> rows(cfg.finetune_batch);
  std::vector<int> labels(cfg.finetune_batch);
  for (std::size_t it = 0; it < cfg.stage2_iters; ++it) {
    for (std::size_t b = 0; b < cfg.finetune_batch; ++b) {
      rows[b] = train[pick(rng)];
      labels[b] = data.labels[rows[b]];
    }
    const Tensor x = gather(features, rows);
    const Tensor pre = conv2d(x, m.fs);
    const Tensor act = relu(pre);
    const Standardized pooled = standardize_batch(global_avg_pool(act));
    const XentResult xent = softmax_xent(head_forward(pooled.z, m.head), labels);
    if (!std::isfinite(xent.loss)) {
      throw TrainingError("finetune: non-finite loss at iteration " + std::to_string(it));
    }
    rep.trace.push_back(xent.loss);

    const HeadGrads gh = head_backward(pooled.z, m.head, xent.grad);
    const Tensor g_pooled = standardize_batch_grad(pooled, gh.input);
    const Tensor g_pre = relu_grad(pre, global_avg_pool_grad(g_pooled, act.shape()));
    const ConvGrads gc = conv2d_grad(x, m.fs, g_pre, false);
    opt.step({m.fs.weights.data(), std::span<float>(m.fs.bias), std::span<float>(m.head.weights),
              std::span<float>(m.head.bias)},
             {gc.weights.data(), std::span<const float>(gc.bias), std::span<const float>(gh.weights),
              std::span<const float>(gh.bias)});
  }
  if (w.hash() != w_hash || p.hash() != p_hash) {
    throw StateError("finetune: frozen extractor or RFTM weights changed");
  }

  const Tensor train_features = gather(features, train);
  m.norm = feature_stats(map_chunks(train_features, [&](const Tensor& x) {
    return global_avg_pool(relu(conv2d(x, m.fs)));
  }));
  res.heldout_accuracy = accuracy(features, data.labels, test, m);
  rep.metrics = {
      {"classes", std::to_string(init.head.classes)},
      {"train_count", std::to_string(train.size())},
      {"heldout_count", std::to_string(test.size())},
      {"chance_accuracy", fmt_num(1.0 / static_cast<double>(init.head.classes))},
      {"heldout_accuracy", fmt_num(res.heldout_accuracy)},
      {"rftm_hash", hex64(p_hash)},
      {"model_hash", hex64(m.hash())},
  };
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

void add_finetune(TnsrFile& file, const FinetuneModel& m) {
  file.add("fs.weight", m.fs.weights);
  file.add("fs.bias", {static_cast<std::uint32_t>(m.fs.bias.size())}, m.fs.bias);
  file.add("norm.mean", {static_cast<std::uint32_t>(m.norm.mean.size())}, m.norm.mean);
  file.add("norm.inv_std", {static_cast<std::uint32_t>(m.norm.inv_std.size())}, m.norm.inv_std);
  file.add("head.weight", {static_cast<std::uint32_t>(m.head.classes), static_cast<std::uint32_t>(m.head.width)},
           m.head.weights);
  file.add("head.bias", {static_cast<std::uint32_t>(m.head.classes)}, m.head.bias);
}

FinetuneModel finetune_from(const TnsrFile& file) {
  FinetuneModel m;
  m.fs.weights = file.tensor("fs.weight");
  m.fs.bias = file.get("fs.bias").data;
  m.fs.stride = 1;
  m.fs.padding = (m.fs.kh() - 1) / 2;
  if (m.fs.bias.size() != m.fs.c_out()) throw FormatError("fs: bias length mismatch");
  m.norm.mean = file.get("norm.mean").data;
  m.norm.inv_std = file.get("norm.inv_std").data;
  if (m.norm.mean.size() != m.fs.c_out() || m.norm.inv_std.size() != m.fs.c_out()) {
    throw FormatError("norm: statistics length differs from fs output channels");
  }
  const TnsrEntry& hw = file.get("head.weight");
  if (hw.dims.size() != 2) throw FormatError("head.weight must be 2-D");
  m.head.classes = hw.dims[0];
  m.head.width = hw.dims[1];
  m.head.weights = hw.data;
  m.head.bias = file.get("head.bias").data;
  if (m.head.bias.size() != m.head.classes) throw FormatError("head: bias length mismatch");
  if (m.head.width != m.fs.c_out()) throw FormatError("head width differs from fs output channels");
  return m;
}

}  // namespace hdp
