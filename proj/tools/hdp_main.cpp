#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdp/config.hpp"
#include "hdp/error.hpp"
#include "hdp/io_util.hpp"
#include "hdp/pipeline.hpp"

namespace {

constexpr int kItemErrors = 1;
constexpr int kUsage = 2;
constexpr int kFailure = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavily-degraded prior toolkit: corpus synthesis, UDCP transmission maps, HD/LD "
               "partitioning, RFTM training, finetuning and gap analysis"};
  app.require_subcommand(1);
  std::string config_path, out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "config file of 'key = value' lines")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--set", overrides, "config override KEY=VALUE (repeatable)");

  auto* synth = app.add_subcommand("synth", "write a synthetic clean/degraded corpus");
  auto* estimate = app.add_subcommand("estimate", "estimate airlight and transmission maps (UDCP)");
  std::optional<std::string> input;
  estimate->add_option("--input", input, "directory of P6 images (default: the synthetic corpus)");
  auto* partition = app.add_subcommand("partition", "split patches into HD/LD sets by transmission");
  auto* train = app.add_subcommand("train", "stage 1: train the transference module with the KL loss");
  auto* finetune = app.add_subcommand("finetune", "stage 2: finetune FS + head with the module frozen");
  auto* analyze = app.add_subcommand("analyze", "MMD gap report, permutation test and t-SNE embedding");
  auto* sweep = app.add_subcommand("sweep", "threshold sweep: partition, train, finetune, analyze per T");
  auto* config = app.add_subcommand("config", "print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  hdp::PipelineConfig cfg;
  try {
    if (!config_path.empty()) cfg = hdp::parse_config(hdp::read_text(config_path));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw hdp::FormatError("--set expects KEY=VALUE, got '" + kv + "'");
      hdp::set_config_value(cfg, std::string(hdp::trim(kv.substr(0, eq))), std::string(hdp::trim(kv.substr(eq + 1))));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
  } catch (const hdp::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (config->parsed()) {
      std::cout << hdp::serialize_config(cfg);
    } else if (synth->parsed()) {
      hdp::cmd_synth(cfg, out, std::cout);
    } else if (estimate->parsed()) {
      const auto s = hdp::cmd_estimate(cfg, out, std::cerr,
                                       input ? std::optional<std::filesystem::path>(*input) : std::nullopt);
      if (s.failed > 0) return kItemErrors;
    } else if (partition->parsed()) {
      hdp::cmd_partition(cfg, out, std::cout);
    } else if (train->parsed()) {
      hdp::cmd_train(cfg, out, std::cout);
    } else if (finetune->parsed()) {
      hdp::cmd_finetune(cfg, out, std::cout);
    } else if (analyze->parsed()) {
      hdp::cmd_analyze(cfg, out, std::cout);
    } else if (sweep->parsed()) {
      hdp::cmd_sweep(cfg, out, std::cout);
    }
  } catch (const hdp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return 0;
}
