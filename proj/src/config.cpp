#include "hdp/config.hpp"

#include <functional>
#include <set>

#include "hdp/error.hpp"
#include "hdp/io_util.hpp"

namespace hdp {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

std::size_t to_size(std::string_view v, std::string_view key) {
  const long long x = parse_int(v, key);
  if (x < 0) throw FormatError(std::string(key) + ": must be non-negative");
  return static_cast<std::size_t>(x);
}

std::string fmt_list(const double* v, std::size_t n) {
  std::string out;
  for (std::size_t k = 0; k < n; ++k) out += (k ? "," : "") + fmt_num(v[k]);
  return out;
}

std::vector<double> parse_list(std::string_view v, std::string_view key) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    const std::string_view item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (item.empty()) throw FormatError(std::string(key) + ": empty list item");
    out.push_back(parse_double(item, key));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::array<double, 3> parse_rgb(std::string_view v, std::string_view key) {
  const auto l = parse_list(v, key);
  if (l.size() != 3) throw FormatError(std::string(key) + ": expected 3 comma-separated values");
  return {l[0], l[1], l[2]};
}

#define SIZE_FIELD(name, member)                                                     \
  Field {                                                                            \
    name, [](const PipelineConfig& c) { return std::to_string(c.member); },          \
        [](PipelineConfig& c, std::string_view v) { c.member = to_size(v, name); }   \
  }
#define REAL_FIELD(name, member)                                                     \
  Field {                                                                            \
    name, [](const PipelineConfig& c) { return fmt_num(c.member); },                 \
        [](PipelineConfig& c, std::string_view v) { c.member = parse_double(v, name); } \
  }
#define RGB_FIELD(name, member)                                                      \
  Field {                                                                            \
    name, [](const PipelineConfig& c) { return fmt_list(c.member.data(), 3); },      \
        [](PipelineConfig& c, std::string_view v) { c.member = parse_rgb(v, name); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      Field{"seed", [](const PipelineConfig& c) { return std::to_string(c.seed); },
            [](PipelineConfig& c, std::string_view v) { c.seed = parse_u64(v, "seed"); }},
      SIZE_FIELD("synth.count", synth_count),
      SIZE_FIELD("synth.size", synth_size),
      Field{"synth.classes", [](const PipelineConfig& c) { return std::to_string(c.synth_classes); },
            [](PipelineConfig& c, std::string_view v) {
              c.synth_classes = static_cast<int>(parse_int(v, "synth.classes"));
            }},
      REAL_FIELD("synth.dark_fraction", synth_dark_fraction),
      REAL_FIELD("synth.speckle", synth_speckle),
      REAL_FIELD("synth.t_low", synth_t_low),
      REAL_FIELD("synth.t_high", synth_t_high),
      SIZE_FIELD("synth.grid", synth_grid),
      RGB_FIELD("synth.u_airlight_low", u_airlight_low),
      RGB_FIELD("synth.u_airlight_high", u_airlight_high),
      RGB_FIELD("synth.f_airlight_low", f_airlight_low),
      RGB_FIELD("synth.f_airlight_high", f_airlight_high),
      SIZE_FIELD("udcp.window", udcp_window),
      REAL_FIELD("udcp.omega", udcp_omega),
      REAL_FIELD("partition.threshold", threshold),
      SIZE_FIELD("partition.patch", patch_size),
      SIZE_FIELD("partition.stride", patch_stride),
      Field{"partition.aggregate", [](const PipelineConfig& c) { return aggregate_name(c.aggregate); },
            [](PipelineConfig& c, std::string_view v) { c.aggregate = parse_aggregate(v); }},
      SIZE_FIELD("partition.max_patches", max_patches),
      Field{"partition.scores", [](const PipelineConfig& c) { return c.scores_path; },
            [](PipelineConfig& c, std::string_view v) { c.scores_path = std::string(v); }},
      REAL_FIELD("partition.ap_threshold", ap_threshold),
      SIZE_FIELD("extractor.c0", c0),
      SIZE_FIELD("extractor.c1", c1),
      SIZE_FIELD("extractor.pretrain_iters", pretrain_iters),
      SIZE_FIELD("extractor.pretrain_batch", pretrain_batch),
      REAL_FIELD("extractor.pretrain_lr", pretrain_lr),
      REAL_FIELD("extractor.pretrain_weight_decay", pretrain_weight_decay),
      SIZE_FIELD("rftm.cmid", rftm_cmid),
      SIZE_FIELD("rftm.kernel", rftm_kernel),
      SIZE_FIELD("rftm.layers", rftm_layers),
      Field{"rftm.init", [](const PipelineConfig& c) { return std::string(rftm_init_name(c.rftm_init)); },
            [](PipelineConfig& c, std::string_view v) { c.rftm_init = parse_rftm_init(v); }},
      Field{"rftm.placement", [](const PipelineConfig& c) { return c.rftm_placement; },
            [](PipelineConfig& c, std::string_view v) {
              if (v != "after_stage0") {
                throw FormatError("rftm.placement: only after_stage0 is implemented, got '" + std::string(v) + "'");
              }
              c.rftm_placement = std::string(v);
            }},
      REAL_FIELD("train.lr", train.lr),
      SIZE_FIELD("train.batch", train.batch),
      REAL_FIELD("train.momentum", train.momentum),
      SIZE_FIELD("train.iters", train.stage1_iters),
      REAL_FIELD("train.kl_epsilon", train.kl_epsilon),
      REAL_FIELD("train.temperature", train.temperature),
      SIZE_FIELD("finetune.iters", train.stage2_iters),
      REAL_FIELD("finetune.lr", train.finetune_lr),
      SIZE_FIELD("finetune.batch", train.finetune_batch),
      REAL_FIELD("finetune.holdout", train.holdout_fraction),
      SIZE_FIELD("finetune.max_patches", finetune_max_patches),
      SIZE_FIELD("finetune.repeats", finetune_repeats),
      SIZE_FIELD("analysis.permutations", permutations),
      SIZE_FIELD("analysis.tsne_points", tsne_points),
      REAL_FIELD("analysis.tsne_perplexity", tsne_perplexity),
      SIZE_FIELD("analysis.tsne_iters", tsne_iters),
      Field{"sweep.thresholds",
            [](const PipelineConfig& c) { return fmt_list(c.sweep_thresholds.data(), c.sweep_thresholds.size()); },
            [](PipelineConfig& c, std::string_view v) { c.sweep_thresholds = parse_list(v, "sweep.thresholds"); }},
  };
  return f;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef RGB_FIELD

void in_unit(double v, const char* key) {
  if (!(v >= 0.0 && v <= 1.0)) throw ParamError(std::string(key) + " must be in [0, 1]");
}

}  // namespace

void PipelineConfig::validate() const {
  if (synth_size < 32) throw ParamError("synth.size must be >= 32");
  if (synth_classes < 1 || synth_classes > kMaxShapeClasses) {
    throw ParamError("synth.classes must be in [1, " + std::to_string(kMaxShapeClasses) + "]");
  }
  in_unit(synth_dark_fraction, "synth.dark_fraction");
  in_unit(synth_speckle, "synth.speckle");
  in_unit(synth_t_low, "synth.t_low");
  in_unit(synth_t_high, "synth.t_high");
  if (synth_t_low > synth_t_high) throw ParamError("synth.t_low must be <= synth.t_high");
  if (synth_grid < 1) throw ParamError("synth.grid must be >= 1");
  for (const auto* pair : {&u_airlight_low, &f_airlight_low}) {
    const auto& hi = pair == &u_airlight_low ? u_airlight_high : f_airlight_high;
    for (std::size_t k = 0; k < 3; ++k) {
      in_unit((*pair)[k], "airlight bounds");
      in_unit(hi[k], "airlight bounds");
      if ((*pair)[k] > hi[k]) throw ParamError("airlight low bound exceeds high bound");
    }
  }
  if (udcp_window % 2 == 0) throw ParamError("udcp.window must be odd");
  if (!(udcp_omega > 0.0 && udcp_omega <= 1.0)) throw ParamError("udcp.omega must be in (0, 1]");
  in_unit(threshold, "partition.threshold");
  if (patch_size < 4 || patch_size % 4 != 0) throw ParamError("partition.patch must be a positive multiple of 4");
  if (patch_size > synth_size) throw ParamError("partition.patch exceeds synth.size");
  if (patch_stride < 1) throw ParamError("partition.stride must be >= 1");
  if (ap_threshold < 0.0) throw ParamError("partition.ap_threshold must be >= 0");
  if (c0 < 1 || c1 < 1 || rftm_cmid < 1) throw ParamError("channel widths must be >= 1");
  if (pretrain_batch < 2 || !(pretrain_lr > 0.0)) throw ParamError("extractor pretraining needs batch >= 2 and lr > 0");
  if (!(pretrain_weight_decay >= 0.0)) throw ParamError("extractor.pretrain_weight_decay must be >= 0");
  if (rftm_kernel % 2 == 0) throw ParamError("rftm.kernel must be odd");
  if (rftm_layers < 2) throw ParamError("rftm.layers must be >= 2");
  train.validate();
  if (finetune_repeats < 1) throw ParamError("finetune.repeats must be >= 1");
  if (tsne_points < 2) throw ParamError("analysis.tsne_points must be >= 2");
  if (sweep_thresholds.empty()) throw ParamError("sweep.thresholds must not be empty");
  for (double t : sweep_thresholds) in_unit(t, "sweep.thresholds entries");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

std::string serialize_config(const PipelineConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      try {
        f.set(c, value);
      } catch (const FormatError&) {
        throw;
      } catch (const Error& e) {
        throw FormatError(key + ": " + e.what());
      }
      return;
    }
  }
  throw FormatError("unknown config key '" + key + "'");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  for (const std::string& raw : split_lines(text)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!seen.insert(key).second) {
      throw FormatError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    set_config_value(c, key, value);
  }
  return c;
}

}  // namespace hdp
