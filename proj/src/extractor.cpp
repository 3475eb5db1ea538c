#include "hdp/extractor.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "hdp/error.hpp"
#include "hdp/head.hpp"
#include "hdp/optim.hpp"

namespace hdp {

namespace {

struct StageCache {
  Tensor input;
  Tensor pre;  // conv output before ReLU
  PoolResult pool;
};

void check_stage_input(const Tensor& x, const ConvParams& p, const char* stage) {
  const Shape& s = x.shape();
  if (s.c != p.c_in()) {
    throw ShapeError(std::string(stage) + ": input " + s.str() + " has " + std::to_string(s.c) +
                     " channels, expected " + std::to_string(p.c_in()));
  }
  if (s.h % 2 != 0 || s.w % 2 != 0 || s.h == 0 || s.w == 0) {
    throw ShapeError(std::string(stage) + ": spatial extent must be even and non-zero, got " +
                     s.str());
  }
}

Tensor stage_forward(const Tensor& x, const ConvParams& p, const char* stage, StageCache* cache) {
  check_stage_input(x, p, stage);
  Tensor pre = conv2d(x, p);
  PoolResult pool = maxpool2(relu(pre));
  Tensor out = pool.output;
  if (cache != nullptr) *cache = StageCache{x, std::move(pre), std::move(pool)};
  return out;
}

// Returns conv gradients; grad wrt the stage input only when requested.
ConvGrads stage_backward(const StageCache& c, const ConvParams& p, const Tensor& grad_out,
                         bool need_input) {
  const Tensor g_relu = maxpool2_grad(c.pool.argmax, grad_out, c.pre.shape());
  const Tensor g_pre = relu_grad(c.pre, g_relu);
  return conv2d_grad(c.input, p, g_pre, need_input);
}

}  // namespace

std::uint64_t ExtractorWeights::hash() const { return ps1.hash(ps0.hash()); }

ExtractorWeights init_extractor(const ExtractorConfig& cfg, std::uint64_t seed) {
  if (cfg.c0 < 1 || cfg.c1 < 1 || cfg.in_channels < 1) {
    throw ParamError("extractor channel counts must be >= 1");
  }
  std::mt19937_64 rng(seed);
  ExtractorWeights w;
  w.ps0 = make_conv(cfg.in_channels, cfg.c0, 3, rng);
  w.ps1 = make_conv(cfg.c0, cfg.c1, 3, rng);
  return w;
}

Tensor ps0_forward(const Tensor& x, const ExtractorWeights& w) {
  return stage_forward(x, w.ps0, "ps0_forward", nullptr);
}

Tensor ps1_forward(const Tensor& f0, const ExtractorWeights& w) {
  return stage_forward(f0, w.ps1, "ps1_forward", nullptr);
}

Tensor ps01_forward(const Tensor& x, const ExtractorWeights& w) {
  return ps1_forward(ps0_forward(x, w), w);
}

ExtractorWeights pretrain_extractor(const Tensor& patches, std::span<const int> labels,
                                    const ExtractorConfig& cfg, const PretrainOptions& opts,
                                    PretrainReport* report) {
  const std::size_t n = patches.shape().n;
  if (labels.size() != n) throw ShapeError("pretrain_extractor: label count differs from patches");
  if (n == 0) throw ParamError("pretrain_extractor: no patches");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ParamError("pretrain_extractor: need at least 2 classes");
  if (*distinct.begin() < 0) throw ParamError("pretrain_extractor: negative class id");
  if (opts.batch < 2) throw ParamError("pretrain_extractor: batch must be >= 2");
  const auto classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;

  ExtractorWeights w = init_extractor(cfg, opts.seed);
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  HeadParams head = init_head(cfg.c1, classes, rng);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Sgd opt(opts.lr, opts.momentum);

  PretrainReport rep;
  rep.classes = classes;
  std::vector<int> batch_labels(opts.batch);
  std::vector<Tensor> samples(opts.batch);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    for (std::size_t b = 0; b < opts.batch; ++b) {
      const std::size_t k = pick(rng);
      samples[b] = patches.slice(k, 1);
      batch_labels[b] = labels[k];
    }
    const Tensor x = stack(samples);
    StageCache c0, c1;
    const Tensor f0 = stage_forward(x, w.ps0, "ps0_forward", &c0);
    const Tensor f1 = stage_forward(f0, w.ps1, "ps1_forward", &c1);
    const Standardized pooled = standardize_batch(global_avg_pool(f1));
    const Tensor logits = head_forward(pooled.z, head);
    const XentResult xent = softmax_xent(logits, batch_labels);
    rep.loss_trace.push_back(xent.loss);

    const HeadGrads gh = head_backward(pooled.z, head, xent.grad);
    const Tensor g_f1 = global_avg_pool_grad(standardize_batch_grad(pooled, gh.input), f1.shape());
    ConvGrads g1 = stage_backward(c1, w.ps1, g_f1, true);
    ConvGrads g0 = stage_backward(c0, w.ps0, g1.input, false);
    if (opts.weight_decay > 0.0) {
      for (auto [g, p] : {std::pair{g0.weights.data(), w.ps0.weights.data()},
                          std::pair{g1.weights.data(), w.ps1.weights.data()}}) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] = static_cast<float>(g[i] + opts.weight_decay * p[i]);
        }
      }
    }
    opt.step({w.ps0.weights.data(), std::span<float>(w.ps0.bias), w.ps1.weights.data(),
              std::span<float>(w.ps1.bias), std::span<float>(head.weights), std::span<float>(head.bias)},
             {g0.weights.data(), std::span<const float>(g0.bias), g1.weights.data(),
              std::span<const float>(g1.bias), std::span<const float>(gh.weights),
              std::span<const float>(gh.bias)});
  }

  // Held-in accuracy with the final head and whole-set statistics; features computed in fixed chunks.
  constexpr std::size_t kChunk = 32;
  Tensor pooled(Shape{n, cfg.c1, 1, 1});
  for (std::size_t first = 0; first < n; first += kChunk) {
    const Tensor part = global_avg_pool(ps01_forward(patches.slice(first, std::min(kChunk, n - first)), w));
    std::copy(part.data().begin(), part.data().end(), pooled.data().begin() + static_cast<std::ptrdiff_t>(first * cfg.c1));
  }
  const auto pred = argmax_rows(head_forward(standardize_with(pooled, feature_stats(pooled)), head));
  std::size_t correct = 0;
  for (std::size_t k = 0; k < n; ++k) correct += pred[k] == labels[k] ? 1 : 0;
  rep.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  if (report != nullptr) *report = std::move(rep);
  w.frozen = true;
  return w;
}

void add_extractor(TnsrFile& file, const ExtractorWeights& w) {
  file.add("ps0.weight", w.ps0.weights);
  file.add("ps0.bias", {static_cast<std::uint32_t>(w.ps0.bias.size())}, w.ps0.bias);
  file.add("ps1.weight", w.ps1.weights);
  file.add("ps1.bias", {static_cast<std::uint32_t>(w.ps1.bias.size())}, w.ps1.bias);
}

ExtractorWeights extractor_from(const TnsrFile& file, bool frozen) {
  auto conv = [&](const std::string& prefix) {
    ConvParams p;
    p.weights = file.tensor(prefix + ".weight");
    p.bias = file.get(prefix + ".bias").data;
    p.stride = 1;
    p.padding = (p.kh() - 1) / 2;
    if (p.bias.size() != p.c_out()) throw FormatError(prefix + ": bias length mismatch");
    return p;
  };
  ExtractorWeights w{conv("ps0"), conv("ps1"), frozen};
  if (w.ps1.c_in() != w.ps0.c_out()) throw FormatError("extractor: ps1 input channels != ps0 output");
  return w;
}

}  // namespace hdp
