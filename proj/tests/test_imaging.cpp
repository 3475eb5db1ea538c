#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "hdp/error.hpp"
#include "hdp/imaging.hpp"
#include "oracles.hpp"

namespace hdp {
namespace {

Image constant_image(std::size_t h, std::size_t w, float r, float g, float b) {
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
  }
  return img;
}

float max_abs_diff(const GrayMap& a, const GrayMap& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

TEST(DegradeTest, FullTransmissionKeepsScene) {
  std::mt19937_64 rng(1);
  const Image j = oracle::random_image(9, 7, rng);
  EXPECT_EQ(degrade(j, TransmissionMap(9, 7, 1.0f), Airlight::clamped(0.3f, 0.6f, 0.9f)), j);
}

TEST(DegradeTest, ZeroTransmissionGivesAirlight) {
  std::mt19937_64 rng(2);
  const Image j = oracle::random_image(5, 6, rng);
  const Image out = degrade(j, TransmissionMap(5, 6, 0.0f), Airlight::clamped(0.3f, 0.6f, 0.9f));
  EXPECT_EQ(out, constant_image(5, 6, 0.3f, 0.6f, 0.9f));
}

TEST(DegradeTest, HalfTransmissionMidpoint) {
  const Image out = degrade(constant_image(2, 2, 0.8f, 0.8f, 0.8f), TransmissionMap(2, 2, 0.5f),
                            Airlight::clamped(0.2f, 0.2f, 0.2f));
  for (float v : out.data()) EXPECT_NEAR(v, 0.5f, 1e-7);
}

TEST(DegradeTest, RejectsMismatchedMap) {
  EXPECT_THROW(degrade(Image(4, 4), TransmissionMap(4, 5), Airlight{}), ShapeError);
}

TEST(DegradeTest, LargerTransmissionMovesTowardScene) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = static_cast<float>(0.05 + 0.5 * u(rng));
    const auto j = static_cast<float>(a + (1.0 - a) * u(rng));
    const auto t1 = static_cast<float>(u(rng)), t2 = static_cast<float>(u(rng));
    const float lo = std::min(t1, t2), hi = std::max(t1, t2);
    const Image scene = constant_image(1, 1, j, j, j);
    const Airlight air = Airlight::clamped(a, a, a);
    const float i_lo = degrade(scene, TransmissionMap(1, 1, lo), air).at(0, 0, 0);
    const float i_hi = degrade(scene, TransmissionMap(1, 1, hi), air).at(0, 0, 0);
    EXPECT_LE(std::abs(j - i_hi), std::abs(j - i_lo) + 1e-7f);
  }
}

TEST(DarkChannelTest, ConstantImage) {
  const GrayMap d = underwater_dark_channel(constant_image(6, 5, 0.1f, 0.7f, 0.4f), 3);
  for (float v : d.data()) EXPECT_EQ(v, 0.4f);
}

TEST(DarkChannelTest, UnitWindowIsChannelMin) {
  std::mt19937_64 rng(4);
  const Image img = oracle::random_image(8, 8, rng);
  const GrayMap d = underwater_dark_channel(img, 1);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(d.at(y, x), std::min(img.at(1, y, x), img.at(2, y, x)));
  }
}

TEST(DarkChannelTest, MatchesNeighborhoodScan) {
  std::mt19937_64 rng(5);
  const Image img = oracle::random_image(16, 16, rng);
  for (std::size_t window : {3u, 5u, 15u}) {
    EXPECT_EQ(underwater_dark_channel(img, window), oracle::dark_channel(img, window)) << window;
  }
}

TEST(DarkChannelTest, RejectsEvenWindow) {
  EXPECT_THROW(underwater_dark_channel(Image(4, 4), 2), ParamError);
  EXPECT_THROW(underwater_dark_channel(Image(4, 4), 0), ParamError);
}

TEST(DarkChannelTest, BrighteningNeverLowersMap) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Image img = oracle::random_image(10, 12, rng);
    const GrayMap before = underwater_dark_channel(img, 3);
    const auto y = static_cast<std::size_t>(u(rng) * 10), x = static_cast<std::size_t>(u(rng) * 12);
    for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = std::min(1.0f, img.at(c, y, x) + 0.3f);
    const GrayMap after = underwater_dark_channel(img, 3);
    for (std::size_t i = 0; i < before.data().size(); ++i) EXPECT_GE(after.data()[i], before.data()[i]);
  }
}

TEST(AirlightTest, ConstantImage) {
  EXPECT_EQ(estimate_airlight(constant_image(5, 5, 0.2f, 0.5f, 0.01f), 3), Airlight::clamped(0.2f, 0.5f, 0.01f));
  EXPECT_EQ(Airlight::clamped(0.2f, 0.5f, 0.01f).rgb[2], Airlight::kFloor);
}

TEST(AirlightTest, SingleWhitePixel) {
  Image img(7, 9);
  for (std::size_t c = 0; c < 3; ++c) img.at(c, 3, 4) = 1.0f;
  EXPECT_EQ(estimate_airlight(img, 1), Airlight::clamped(1.0f, 1.0f, 1.0f));
}

TEST(AirlightTest, MatchesExhaustiveArgmax) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Image img = oracle::random_image(12, 10, rng);
    EXPECT_EQ(estimate_airlight(img, 3).rgb, oracle::airlight(img, 3));
  }
}

TEST(TransmissionTest, ImageEqualToAirlight) {
  const Airlight a = Airlight::clamped(0.3f, 0.6f, 0.8f);
  const TransmissionMap t = estimate_transmission(constant_image(6, 6, 0.3f, 0.6f, 0.8f), a, 3, 0.95);
  for (float v : t.data()) EXPECT_NEAR(v, 0.05f, 1e-7);
}

TEST(TransmissionTest, DarkGreenBlueGivesFullTransmission) {
  const TransmissionMap t = estimate_transmission(constant_image(6, 6, 0.9f, 0.0f, 0.0f), Airlight{}, 3, 0.95);
  for (float v : t.data()) EXPECT_EQ(v, 1.0f);
}

TEST(TransmissionTest, RejectsBadParameters) {
  const Image img(4, 4);
  EXPECT_THROW(estimate_transmission(img, Airlight{}, 3, 0.0), ParamError);
  EXPECT_THROW(estimate_transmission(img, Airlight{}, 3, 1.5), ParamError);
  Airlight low;
  low.rgb[1] = 0.01f;
  EXPECT_THROW(estimate_transmission(img, low, 3, 0.9), ParamError);
}

TEST(TransmissionTest, RoundTripThroughDegradation) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Image j = synth_scene(seed, 48, 48).image;
    apply_dark_lattice(j, 3);
    const float t_true = 0.1f + 0.08f * static_cast<float>(seed);
    const Airlight a = Airlight::clamped(0.1f, 0.7f, 0.85f);
    const Image i = degrade(j, TransmissionMap(48, 48, t_true), a);
    const TransmissionMap t = estimate_transmission(i, a, 3, 1.0);
    EXPECT_LT(max_abs_diff(t, TransmissionMap(48, 48, t_true)), 1e-6f) << "seed " << seed;
  }
}

TEST(TransmissionTest, StaysInUnitRange) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Image img = oracle::random_image(10, 10, rng);
    const TransmissionMap t = estimate_transmission(img, estimate_airlight(img, 3), 3, 0.95);
    for (float v : t.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(SynthSceneTest, Deterministic) {
  const Scene a = synth_scene(99, 64, 64), b = synth_scene(99, 64, 64);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(synth_scene(100, 64, 64).image, a.image);
}

TEST(SynthSceneTest, SingleClass) {
  SceneOptions opts;
  opts.classes = 1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const SceneLabel& l : synth_scene(seed, 64, 64, opts).labels) EXPECT_EQ(l.class_id, 0);
  }
}

TEST(SynthSceneTest, LabelsInsideImageAndValuesInRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = synth_scene(seed, 64, 80);
    ASSERT_GE(s.labels.size(), 1u);
    ASSERT_LE(s.labels.size(), 4u);
    for (const SceneLabel& l : s.labels) {
      EXPECT_LE(l.x + l.w, 80u);
      EXPECT_LE(l.y + l.h, 64u);
    }
    for (float v : s.image.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(SynthSceneTest, ClassHistogramRoughlyUniform) {
  std::map<int, std::size_t> counts;
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const SceneLabel& l : synth_scene(seed, 64, 64).labels) {
      ++counts[l.class_id];
      ++total;
    }
  }
  ASSERT_EQ(counts.size(), 4u);
  const double share = static_cast<double>(total) / 4.0;
  for (const auto& [cls, n] : counts) {
    EXPECT_GE(static_cast<double>(n), 0.7 * share) << "class " << cls;
    EXPECT_LE(static_cast<double>(n), 1.3 * share) << "class " << cls;
  }
}

TEST(SynthSceneTest, RejectsSmallExtent) { EXPECT_THROW(synth_scene(1, 31, 64), ParamError); }

TEST(SynthTransmissionTest, DegenerateRangeIsConstant) {
  const TransmissionMap t = synth_transmission(3, 20, 30, 0.5, 0.5);
  for (float v : t.data()) EXPECT_EQ(v, 0.5f);
}

TEST(SynthTransmissionTest, StaysInRangeAndVaries) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TransmissionMap t = synth_transmission(seed, 64, 64, 0.2, 0.7);
    const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    EXPECT_GE(*lo, 0.2f);
    EXPECT_LE(*hi, 0.7f);
    EXPECT_GT(*hi - *lo, 0.05f);
  }
  EXPECT_EQ(synth_transmission(5, 32, 32, 0.1, 0.9), synth_transmission(5, 32, 32, 0.1, 0.9));
  EXPECT_THROW(synth_transmission(1, 8, 8, 0.6, 0.4), ParamError);
}

TEST(DarkLatticeTest, EveryWindowContainsZero) {
  std::mt19937_64 rng(10);
  for (std::size_t window : {3u, 5u, 7u}) {
    Image img = oracle::random_image(23, 17, rng);
    for (float& v : img.data()) v = std::max(v, 0.1f);
    apply_dark_lattice(img, window);
    const GrayMap dark = underwater_dark_channel(img, window);
    for (float v : dark.data()) EXPECT_EQ(v, 0.0f) << window;
  }
}

}  // namespace
}  // namespace hdp
