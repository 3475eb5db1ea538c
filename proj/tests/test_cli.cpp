#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "hdp/analysis.hpp"
#include "hdp/io_util.hpp"
#include "hdp/pipeline.hpp"
#include "hdp/training.hpp"

namespace hdp {
namespace {

namespace fs = std::filesystem;

const char* kTinyConfig =
    "seed = 5\n"
    "synth.count = 6\n"
    "synth.size = 64\n"
    "partition.patch = 32\n"
    "partition.stride = 32\n"
    "partition.max_patches = 12\n"
    "extractor.c0 = 4\n"
    "extractor.c1 = 8\n"
    "extractor.pretrain_iters = 20\n"
    "rftm.cmid = 8\n"
    "train.iters = 60\n"
    "finetune.iters = 10\n"
    "finetune.batch = 4\n"
    "finetune.max_patches = 30\n"
    "finetune.repeats = 2\n"
    "analysis.permutations = 20\n"
    "analysis.tsne_points = 8\n"
    "analysis.tsne_perplexity = 2\n"
    "analysis.tsne_iters = 60\n"
    "sweep.thresholds = 0.5\n";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(HDP_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CliRun {
  int code = -1;
  std::string err;
};

CliRun hdp_cli(const fs::path& dir, const std::string& args) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(HDP_CLI_PATH) + " --out " + (dir / "out").string() + " " + args + " > " +
                          (dir / "stdout.txt").string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_text(err);
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& text = kTinyConfig) {
  write_text(dir / "tiny.config", text);
  return dir / "tiny.config";
}

std::string cfg_arg(const fs::path& dir) { return "--config " + (dir / "tiny.config").string(); }

TEST(CliTest, ConfigErrorsExitWithUsageCode) {
  const fs::path dir = scratch("config_errors");
  write_config(dir, "no.such.key = 1\n");
  EXPECT_EQ(hdp_cli(dir, cfg_arg(dir) + " synth").code, 2);
  write_config(dir, "udcp.window = 4\n");
  const CliRun r = hdp_cli(dir, cfg_arg(dir) + " synth");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("udcp.window"), std::string::npos);
  EXPECT_EQ(hdp_cli(dir, "--set train.lr=-1 config").code, 2);
  EXPECT_EQ(hdp_cli(dir, "--set train.lr config").code, 2);
}

TEST(CliTest, ConfigCommandPrintsResolvedConfig) {
  const fs::path dir = scratch("config_print");
  write_config(dir);
  ASSERT_EQ(hdp_cli(dir, cfg_arg(dir) + " --seed 11 config").code, 0);
  PipelineConfig expected = parse_config(kTinyConfig);
  expected.seed = 11;
  EXPECT_EQ(parse_config(read_text(dir / "stdout.txt")), expected);
}

TEST(CliTest, MissingArtifactNamesProducer) {
  const fs::path dir = scratch("missing");
  write_config(dir);
  for (const auto& [cmd, producer] : {std::pair{"estimate", "hdp synth"}, std::pair{"finetune", "hdp partition"},
                                      std::pair{"analyze", "hdp partition"}}) {
    const CliRun r = hdp_cli(dir, cfg_arg(dir) + " " + cmd);
    EXPECT_EQ(r.code, 3) << cmd;
    EXPECT_NE(r.err.find(producer), std::string::npos) << cmd << ": " << r.err;
  }
}

TEST(CliTest, EstimateReportsBadImagesAndEmptyDirectories) {
  const fs::path dir = scratch("estimate_input");
  write_config(dir);
  const fs::path images = dir / "images";
  fs::create_directories(images);
  EXPECT_EQ(hdp_cli(dir, cfg_arg(dir) + " estimate --input " + images.string()).code, 3);

  Image img(40, 40, 0.3f);
  write_ppm(images / "good.ppm", img);
  write_text(images / "bad.ppm", "P6\n4 4\n255\nshort");
  const CliRun r = hdp_cli(dir, cfg_arg(dir) + " estimate --input " + images.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.ppm"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "maps" / "images" / "good.tnsr"));
  EXPECT_FALSE(fs::exists(dir / "out" / "maps" / "images" / "bad.tnsr"));
}

TEST(CliTest, ZeroCountSynthWritesEmptyManifest) {
  const fs::path dir = scratch("zero_count");
  write_config(dir, "synth.count = 0\n");
  ASSERT_EQ(hdp_cli(dir, cfg_arg(dir) + " synth").code, 0);
  EXPECT_EQ(read_text(dir / "out" / "corpus" / "manifest.tsv"), "# id\ttag\n");
}

class CliPipelineTest : public ::testing::Test {
 protected:
  static void run_all(const fs::path& dir) {
    write_config(dir);
    for (const char* cmd : {"synth", "estimate", "partition", "train", "finetune", "analyze", "sweep"}) {
      const CliRun r = hdp_cli(dir, cfg_arg(dir) + " " + cmd);
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
  }

  static void SetUpTestSuite() {
    first_ = new fs::path(scratch("pipeline_a"));
    run_all(*first_);
  }
  static void TearDownTestSuite() {
    delete first_;
    first_ = nullptr;
  }

  static inline fs::path* first_ = nullptr;
};

TEST_F(CliPipelineTest, ProducesEveryArtifact) {
  const fs::path out = *first_ / "out";
  for (const char* f : {"corpus/manifest.tsv", "maps/summary.tsv", "partition/HD_u.idx", "partition/HD_u.tnsr",
                        "partition/counts.txt", "extractor.tnsr", "extractor_report.txt", "rftm.tnsr",
                        "train_report.txt", "finetune.tnsr", "finetune_report.txt", "gap_report.txt", "tsne.tsv",
                        "tsne_report.txt", "sweep.tsv", "sweep_summary.txt", "sweep.config"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_EQ(parse_report(read_text(out / "train_report.txt")).trace.size(), 60u);
}

TEST_F(CliPipelineTest, RerunIsBytewiseIdentical) {
  const fs::path second = scratch("pipeline_b");
  run_all(second);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(*first_ / "out")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), *first_ / "out");
    ASSERT_TRUE(fs::exists(second / "out" / rel)) << rel;
    EXPECT_EQ(read_bytes(e.path()), read_bytes(second / "out" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 50u);
}

TEST_F(CliPipelineTest, SingleThresholdSweepMatchesSeparateCommands) {
  const fs::path out = *first_ / "out";
  const auto rows = parse_sweep(read_text(out / "sweep.tsv"));
  ASSERT_EQ(rows.size(), 1u);
  const SweepRow& row = rows[0];
  ASSERT_FALSE(row.skipped) << row.note;
  const TrainReport train = parse_report(read_text(out / "train_report.txt"));
  const TrainReport fine = parse_report(read_text(out / "finetune_report.txt"));
  const GapReport gap = parse_gap_report(read_text(out / "gap_report.txt"));
  EXPECT_EQ(fmt_num(row.smoothed_kl), train.metric("smoothed_end"));
  EXPECT_EQ(row.mmd_hd_u_f, gap.mmd_hd_u_f);
  EXPECT_EQ(row.mmd_hd_tu_f, gap.mmd_hd_tu_f);
  EXPECT_EQ(row.verdict, gap.verdict);
  EXPECT_EQ(fmt_num(row.accuracy), fine.metric("accuracy_0"));
  EXPECT_EQ(fmt_num(row.control_accuracy), fine.metric("control_accuracy_0"));
  const auto counts = parse_key_values(read_text(out / "partition" / "counts.txt"));
  for (const auto& [key, value] : counts) {
    if (key == "hd_u") EXPECT_EQ(std::to_string(row.hd_u), value);
    if (key == "ld_f") EXPECT_EQ(std::to_string(row.ld_f), value);
  }
}

}  // namespace
}  // namespace hdp
