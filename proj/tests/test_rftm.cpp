#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hdp/error.hpp"
#include "hdp/extractor.hpp"
#include "hdp/rftm.hpp"
#include "oracles.hpp"

namespace hdp {
namespace {

RftmParams zeroed(RftmParams p) {
  for (ConvParams& c : p.convs) {
    for (float& v : c.weights.data()) v = 0.0f;
    for (float& v : c.bias) v = 0.0f;
  }
  return p;
}

TEST(RftmTest, ZeroParametersGiveZeroOutput) {
  std::mt19937_64 rng(1);
  const RftmParams p = zeroed(init_rftm(RftmConfig{}, 1, RftmInit::kRandom));
  const Tensor f0 = oracle::random_tensor(Shape{2, 16, 8, 8}, rng);
  EXPECT_EQ(rftm_forward(f0, p), Tensor(Shape{2, 32, 4, 4}));
}

TEST(RftmTest, OutputShapeMatchesSecondStage) {
  const RftmParams p = init_rftm(RftmConfig{}, 2, RftmInit::kRandom);
  EXPECT_EQ(rftm_forward(Tensor(Shape{3, 16, 32, 32}), p).shape(), (Shape{3, 32, 16, 16}));
  EXPECT_THROW(rftm_forward(Tensor(Shape{1, 8, 32, 32}), p), ShapeError);
  EXPECT_THROW(rftm_forward(Tensor(Shape{1, 16, 31, 32}), p), ShapeError);
}

TEST(RftmTest, MatchesLayerByLayerOracle) {
  std::mt19937_64 rng(3);
  RftmParams p = init_rftm(RftmConfig{3, 4, 5}, 3, RftmInit::kRandom);
  for (ConvParams& c : p.convs) {
    for (float& b : c.bias) b = static_cast<float>(oracle::uniform(rng, -0.3, 0.3));
  }
  const Tensor f0 = oracle::random_tensor(Shape{2, 3, 8, 8}, rng);
  const oracle::PoolOracle pool = oracle::maxpool(f0);
  Tensor x(Shape{2, 3, 4, 4}, pool.values);
  for (std::size_t k = 0; k < p.convs.size(); ++k) {
    const std::vector<double> y = oracle::conv(x, p.convs[k]);
    Tensor next(conv2d_output_shape(x.shape(), p.convs[k]));
    for (std::size_t i = 0; i < y.size(); ++i) {
      next[i] = static_cast<float>(k + 1 < p.convs.size() ? std::max(y[i], 0.0) : y[i]);
    }
    x = next;
  }
  const Tensor got = rftm_forward(f0, p);
  ASSERT_EQ(got.shape(), x.shape());
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], x[i], 1e-5) << i;
}

TEST(RftmTest, ZeroResidualInitIsBitwiseIdentity) {
  std::mt19937_64 rng(4);
  const ExtractorWeights w = init_extractor(ExtractorConfig{}, 4);
  const RftmParams p = init_rftm(RftmConfig{}, 4, RftmInit::kZeroResidual);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor x = oracle::random_tensor(Shape{2, 3, 32, 32}, rng, -2.0, 2.0);
    const ResidualOutput out = residual_forward(x, w, p);
    EXPECT_EQ(out.features, ps01_forward(x, w));
    EXPECT_EQ(out.base, ps01_forward(x, w));
    EXPECT_EQ(out.residual, Tensor(out.base.shape()));
  }
}

TEST(RftmTest, ResidualIsSumOfTwoPaths) {
  std::mt19937_64 rng(5);
  const ExtractorWeights w = init_extractor(ExtractorConfig{3, 4, 6}, 5);
  const RftmParams p = init_rftm(RftmConfig{4, 6, 6}, 5, RftmInit::kRandom);
  const Tensor x = oracle::random_tensor(Shape{2, 3, 16, 16}, rng);
  const ResidualOutput out = residual_forward(x, w, p);
  const Tensor f0 = ps0_forward(x, w);
  EXPECT_EQ(out.base, ps1_forward(f0, w));
  EXPECT_EQ(out.residual, rftm_forward(f0, p));
  EXPECT_EQ(out.features, add(ps1_forward(f0, w), rftm_forward(f0, p)));
  const ResidualOutput staged = residual_from_stages(f0, out.base, p);
  EXPECT_EQ(staged.features, out.features);
}

TEST(RftmTest, LastLayerIsLinear) {
  std::mt19937_64 rng(6);
  const ExtractorWeights w = init_extractor(ExtractorConfig{3, 4, 6}, 6);
  RftmParams p = init_rftm(RftmConfig{4, 6, 6}, 6, RftmInit::kRandom);
  ASSERT_EQ(p.convs.back().bias, std::vector<float>(6, 0.0f));
  const Tensor x = oracle::random_tensor(Shape{2, 3, 16, 16}, rng);
  const ResidualOutput once = residual_forward(x, w, p);
  for (float& v : p.convs.back().weights.data()) v *= 2.0f;
  const ResidualOutput twice = residual_forward(x, w, p);
  for (std::size_t i = 0; i < once.features.numel(); ++i) {
    const double d1 = static_cast<double>(once.features[i]) - once.base[i];
    const double d2 = static_cast<double>(twice.features[i]) - twice.base[i];
    EXPECT_NEAR(d2, 2.0 * d1, 1e-5 * (1.0 + std::abs(once.base[i]))) << i;
  }
}

TEST(RftmTest, ParameterCountFormula) {
  for (const RftmConfig cfg : {RftmConfig{}, RftmConfig{2, 2, 2}, RftmConfig{16, 8, 32}, RftmConfig{3, 5, 7}}) {
    const RftmParams p = init_rftm(cfg, 1, RftmInit::kRandom);
    const std::size_t c0 = cfg.c0, cm = cfg.cmid, c1 = cfg.c1;
    const std::size_t formula = 9 * c0 * cm + cm + 9 * cm * cm + cm + 9 * cm * c1 + c1;
    std::size_t direct = 0;
    for (const ConvParams& c : p.convs) direct += c.weights.numel() + c.bias.size();
    EXPECT_EQ(p.param_count(), formula);
    EXPECT_EQ(direct, formula);
  }
  EXPECT_EQ(init_rftm(RftmConfig{}, 1, RftmInit::kZeroResidual).param_count(), 9u * 16 * 32 + 32 + 9u * 32 * 32 + 32 + 9u * 32 * 32 + 32);
}

TEST(RftmTest, InitIsDeterministic) {
  EXPECT_EQ(init_rftm(RftmConfig{}, 8, RftmInit::kRandom), init_rftm(RftmConfig{}, 8, RftmInit::kRandom));
  EXPECT_NE(init_rftm(RftmConfig{}, 8, RftmInit::kRandom), init_rftm(RftmConfig{}, 9, RftmInit::kRandom));
  const RftmParams z = init_rftm(RftmConfig{}, 8, RftmInit::kZeroResidual);
  EXPECT_EQ(z.convs.back().weights, Tensor(z.convs.back().weights.shape()));
  EXPECT_EQ(z.convs[0], init_rftm(RftmConfig{}, 8, RftmInit::kRandom).convs[0]);
}

TEST(RftmTest, RandomInitNormsMatchGenerator) {
  const RftmConfig cfg{4, 6, 5};
  const RftmParams p = init_rftm(cfg, 12, RftmInit::kRandom);
  std::mt19937_64 rng(12);
  const std::size_t c_in[] = {4, 6, 6}, c_out[] = {6, 6, 5};
  const double gain[] = {2.0, 2.0, 1.0};
  for (std::size_t k = 0; k < 3; ++k) {
    std::normal_distribution<double> normal(0.0, std::sqrt(gain[k] / static_cast<double>(c_in[k] * 9)));
    double want = 0.0;
    for (std::size_t i = 0; i < c_out[k] * c_in[k] * 9; ++i) {
      const auto v = static_cast<float>(normal(rng));
      want += static_cast<double>(v) * v;
    }
    double got = 0.0;
    for (float v : p.convs[k].weights.data()) got += static_cast<double>(v) * v;
    EXPECT_DOUBLE_EQ(got, want) << "layer " << k;
  }
}

TEST(RftmTest, RejectsUnknownModeAndBadConfig) {
  EXPECT_THROW(parse_rftm_init("orthogonal"), ParamError);
  EXPECT_EQ(parse_rftm_init(rftm_init_name(RftmInit::kRandom)), RftmInit::kRandom);
  RftmConfig even;
  even.kernel = 4;
  EXPECT_THROW(init_rftm(even, 1, RftmInit::kRandom), ParamError);
}

TEST(RftmBackwardTest, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(7);
  const ExtractorWeights w = init_extractor(ExtractorConfig{3, 4, 6}, 7);
  const RftmParams p = init_rftm(RftmConfig{4, 6, 6}, 7, RftmInit::kRandom);
  const ResidualOutput out = residual_forward(oracle::random_tensor(Shape{2, 3, 16, 16}, rng), w, p);
  const RftmGrads g = rftm_backward(out.cache, Tensor(out.features.shape()), p);
  ASSERT_EQ(g.convs.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(g.convs[k].weights, Tensor(p.convs[k].weights.shape()));
    EXPECT_EQ(g.convs[k].bias, std::vector<float>(p.convs[k].bias.size(), 0.0f));
  }
}

TEST(RftmBackwardTest, StaleCacheIsRejected) {
  std::mt19937_64 rng(8);
  const ExtractorWeights w = init_extractor(ExtractorConfig{3, 4, 6}, 8);
  RftmParams p = init_rftm(RftmConfig{4, 6, 6}, 8, RftmInit::kRandom);
  const ResidualOutput out = residual_forward(oracle::random_tensor(Shape{1, 3, 8, 8}, rng), w, p);
  p.convs[1].bias[0] += 0.5f;
  EXPECT_THROW(rftm_backward(out.cache, Tensor(out.features.shape()), p), StateError);
  p.convs[1].bias[0] -= 0.5f;
  EXPECT_THROW(rftm_backward(out.cache, Tensor(Shape{1, 6, 4, 4}), p), ShapeError);
}

TEST(RftmBackwardTest, LastLayerGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const ExtractorWeights w = init_extractor(ExtractorConfig{3, 4, 6}, 9);
  RftmParams p = init_rftm(RftmConfig{4, 6, 6}, 9, RftmInit::kRandom);
  const Tensor x = oracle::random_tensor(Shape{2, 3, 16, 16}, rng);
  const ResidualOutput out = residual_forward(x, w, p);
  const Tensor g = oracle::random_tensor(out.features.shape(), rng);
  const RftmGrads grads = rftm_backward(out.cache, g, p);
  auto objective = [&] {
    const Tensor f = residual_forward(x, w, p).features;
    double s = 0.0;
    for (std::size_t i = 0; i < f.numel(); ++i) s += static_cast<double>(g[i]) * f[i];
    return s;
  };
  double diff2 = 0.0, norm2 = 0.0;
  auto& weights = p.convs[2].weights;
  for (std::size_t i = 0; i < weights.numel(); i += 7) {
    const float orig = weights[i];
    const auto up = static_cast<float>(orig + 1e-3), down = static_cast<float>(orig - 1e-3);
    weights[i] = up;
    const double fp = objective();
    weights[i] = down;
    const double fm = objective();
    weights[i] = orig;
    const double numeric = (fp - fm) / (static_cast<double>(up) - down);
    diff2 += std::pow(numeric - grads.convs[2].weights[i], 2);
    norm2 += numeric * numeric;
  }
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-3);
}

TEST(RftmBackwardTest, ExtractorUntouchedByUpdates) {
  std::mt19937_64 rng(10);
  ExtractorWeights w = init_extractor(ExtractorConfig{3, 4, 6}, 10);
  w.frozen = true;
  const std::uint64_t before = w.hash();
  RftmParams p = init_rftm(RftmConfig{4, 6, 6}, 10, RftmInit::kRandom);
  const Tensor x = oracle::random_tensor(Shape{2, 3, 16, 16}, rng);
  for (int step = 0; step < 5; ++step) {
    const ResidualOutput out = residual_forward(x, w, p);
    const RftmGrads g = rftm_backward(out.cache, out.features, p);
    for (std::size_t k = 0; k < p.convs.size(); ++k) {
      for (std::size_t i = 0; i < p.convs[k].weights.numel(); ++i) p.convs[k].weights[i] -= 1e-3f * g.convs[k].weights[i];
    }
  }
  EXPECT_EQ(w.hash(), before);
}

TEST(RftmTest, ParamsSurviveContainer) {
  const RftmParams p = init_rftm(RftmConfig{3, 4, 5}, 11, RftmInit::kRandom);
  TnsrFile f;
  add_rftm(f, p);
  for (const char* name : {"rftm.conv1.weight", "rftm.conv2.bias", "rftm.conv3.weight", "rftm.conv3.bias"}) {
    EXPECT_TRUE(f.contains(name)) << name;
  }
  EXPECT_EQ(rftm_from(TnsrFile::decode(f.encode())), p);
}

}  // namespace
}  // namespace hdp
