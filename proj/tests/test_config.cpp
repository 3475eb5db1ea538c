#include <gtest/gtest.h>

#include <set>

#include "hdp/config.hpp"
#include "hdp/error.hpp"

namespace hdp {
namespace {

TEST(ConfigTest, DefaultsValidate) { EXPECT_NO_THROW(PipelineConfig{}.validate()); }

TEST(ConfigTest, SerializeParseRoundTrip) {
  PipelineConfig c;
  c.seed = 9577078846185719393ULL;
  c.threshold = 0.35;
  c.aggregate = Aggregate::kMedian;
  c.rftm_init = RftmInit::kRandom;
  c.train.lr = 0.0015;
  c.u_airlight_low = {0.01, 0.5, 0.6};
  c.sweep_thresholds = {0.25, 0.75};
  c.scores_path = "scores.tsv";
  const std::string text = serialize_config(c);
  const PipelineConfig back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(parse_config(serialize_config(PipelineConfig{})), PipelineConfig{});
}

TEST(ConfigTest, KeysAreUniqueAndInSerializedOrder) {
  const std::vector<std::string> keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
  ASSERT_FALSE(keys.empty());
  EXPECT_EQ(keys.front(), "seed");
  const std::string text = serialize_config(PipelineConfig{});
  std::size_t pos = 0;
  for (const std::string& k : keys) {
    const std::size_t at = text.find(k + " = ", pos);
    ASSERT_NE(at, std::string::npos) << k;
    pos = at + k.size();
  }
}

TEST(ConfigTest, PartialFileKeepsDefaults) {
  const PipelineConfig c = parse_config("# tiny\nseed = 3\n\ntrain.iters = 10  # short\n");
  PipelineConfig expected;
  expected.seed = 3;
  expected.train.stage1_iters = 10;
  EXPECT_EQ(c, expected);
}

TEST(ConfigTest, RejectsUnknownDuplicateAndMalformed) {
  EXPECT_THROW(parse_config("no.such.key = 1\n"), FormatError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), FormatError);
  EXPECT_THROW(parse_config("seed 1\n"), FormatError);
  EXPECT_THROW(parse_config("seed = -1\n"), FormatError);
  EXPECT_THROW(parse_config("train.lr = fast\n"), FormatError);
  EXPECT_THROW(parse_config("synth.u_airlight_low = 0.1,0.2\n"), FormatError);
  EXPECT_THROW(parse_config("partition.aggregate = mode\n"), Error);
  EXPECT_THROW(parse_config("rftm.placement = before_stage0\n"), Error);
}

TEST(ConfigTest, SetValueUpdatesOneField) {
  PipelineConfig c;
  set_config_value(c, "partition.threshold", "0.6");
  EXPECT_EQ(c.threshold, 0.6);
  set_config_value(c, "sweep.thresholds", "0.5");
  EXPECT_EQ(c.sweep_thresholds, std::vector<double>{0.5});
  EXPECT_THROW(set_config_value(c, "bogus", "1"), FormatError);
}

TEST(ConfigTest, ValidateRejectsOutOfRange) {
  auto rejects = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ParamError);
  };
  rejects([](PipelineConfig& c) { c.threshold = 1.2; });
  rejects([](PipelineConfig& c) { c.udcp_window = 14; });
  rejects([](PipelineConfig& c) { c.udcp_omega = 0.0; });
  rejects([](PipelineConfig& c) { c.patch_size = 30; });
  rejects([](PipelineConfig& c) { c.patch_size = 256; });
  rejects([](PipelineConfig& c) { c.synth_t_low = 0.9; c.synth_t_high = 0.1; });
  rejects([](PipelineConfig& c) { c.f_airlight_low[1] = 0.9; });
  rejects([](PipelineConfig& c) { c.rftm_kernel = 4; });
  rejects([](PipelineConfig& c) { c.train.batch = 0; });
  rejects([](PipelineConfig& c) { c.sweep_thresholds.clear(); });
  rejects([](PipelineConfig& c) { c.synth_classes = 9; });
}

}  // namespace
}  // namespace hdp
