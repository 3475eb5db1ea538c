#include "hdp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <set>

#include "hdp/imaging.hpp"
#include "hdp/io_util.hpp"
#include "hdp/tnsr.hpp"

namespace fs = std::filesystem;

namespace hdp {

namespace {

constexpr SourceTag kTags[] = {SourceTag::kUnderwater, SourceTag::kFriendly};
constexpr std::size_t kSmoothWindow = 50;
constexpr float kPixelMean = 0.5f;
constexpr float kPixelStd = 0.25f;

std::string tag_dir(SourceTag t) { return std::string(1, tag_char(t)); }

std::string image_id(SourceTag t, std::size_t k) {
  std::string digits = std::to_string(k);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return tag_dir(t) + digits;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void require(const fs::path& p, std::string_view producer) {
  if (!fs::exists(p)) throw MissingArtifact(p, producer);
}

void echo_config(const PipelineConfig& cfg, const fs::path& out, std::string_view command) {
  ensure_dir(out);
  write_text(out / (std::string(command) + ".config"),
             "# " + std::string(command) + " run\n" + serialize_config(cfg));
}

// Sorted stems of *.ppm files directly inside dir.
std::vector<std::string> ppm_stems(const fs::path& dir) {
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

RftmConfig rftm_config(const PipelineConfig& cfg) {
  return RftmConfig{cfg.c0, cfg.rftm_cmid, cfg.c1, cfg.rftm_kernel, cfg.rftm_layers};
}

// Every patch of one domain with pixels and (optional) shape class.
struct PatchPool {
  std::vector<Patch> patches;
  std::vector<Tensor> pixels;
  std::vector<std::optional<int>> classes;
};

Tensor normalized(Tensor x) {
  for (float& v : x.data()) v = (v - kPixelMean) / kPixelStd;
  return x;
}

// Patches on the grid of the estimated maps. With `clean`, pixels come from
// the clean counterparts instead of the degraded images.
PatchPool load_pool(const PipelineConfig& cfg, const fs::path& out, SourceTag tag,
                    const std::set<std::string>* allowed, bool clean = false) {
  const fs::path corpus = out / "corpus" / tag_dir(tag);
  require(corpus, "synth");
  const fs::path maps = out / "maps" / tag_dir(tag);
  const auto stems = ppm_stems(corpus);
  std::vector<std::string> missing;
  for (const auto& id : stems) {
    if (!fs::exists(maps / (id + ".tnsr"))) missing.push_back((maps / (id + ".tnsr")).string());
  }
  if (!missing.empty()) {
    std::string msg = "missing transmission maps (run `hdp estimate`):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  PatchPool pool;
  for (const auto& id : stems) {
    if (allowed != nullptr && allowed->count(id) == 0) continue;
    const Image img = read_ppm(corpus / (id + ".ppm"));
    const TnsrFile mf = TnsrFile::load(maps / (id + ".tnsr"));
    const TnsrEntry& te = mf.get("transmission");
    if (te.dims.size() != 2 || te.dims[0] != img.height() || te.dims[1] != img.width()) {
      throw FormatError((maps / (id + ".tnsr")).string() + ": transmission map does not match image size");
    }
    TransmissionMap t(img.height(), img.width());
    t.data() = te.data;
    const Image src = clean ? read_ppm(corpus / "clean" / (id + ".ppm")) : Image();
    const fs::path label_path = corpus / (id + ".labels");
    const std::vector<SceneLabel> labels = fs::exists(label_path) ? read_labels(label_path) : std::vector<SceneLabel>{};
    for (const Patch& p : extract_patches(id, tag, img, t, cfg.patch_size, cfg.patch_stride, cfg.aggregate)) {
      pool.patches.push_back(p);
      pool.pixels.push_back(normalized(patch_pixels(clean ? src : img, p)));
      pool.classes.push_back(patch_class(p, labels));
    }
  }
  return pool;
}

// Pool indices whose patch is heavy (heavy = true) or light under threshold.
std::vector<std::size_t> select(const PatchPool& pool, double threshold, bool heavy) {
  const auto [hd, ld] = split_hd_ld(pool.patches, threshold);
  std::vector<std::size_t> idx;
  const auto& members = heavy ? hd.members : ld.members;
  // split_hd_ld preserves order, so members map back by a single forward scan.
  std::size_t k = 0;
  for (const Patch& m : members) {
    while (!(pool.patches[k] == m)) ++k;
    idx.push_back(k++);
  }
  return idx;
}

std::vector<std::size_t> cap(std::vector<std::size_t> idx, std::size_t limit) {
  if (idx.size() > limit) idx.resize(limit);
  return idx;
}

PatchBank make_bank(const PatchPool& pool, const std::vector<std::size_t>& idx, Degradation label,
                    double threshold) {
  PatchBank b;
  b.set.label = label;
  b.set.threshold = threshold;
  std::vector<Tensor> px;
  for (std::size_t i : idx) {
    b.set.members.push_back(pool.patches[i]);
    px.push_back(pool.pixels[i]);
  }
  if (!px.empty()) b.pixels = stack(px);
  return b;
}

LabeledPatches make_labeled(const PatchPool& pool, std::size_t limit, std::vector<Patch>* members) {
  LabeledPatches d;
  std::vector<Tensor> px;
  for (std::size_t i = 0; i < pool.patches.size() && px.size() < limit; ++i) {
    if (!pool.classes[i]) continue;
    px.push_back(pool.pixels[i]);
    d.labels.push_back(*pool.classes[i]);
    if (members != nullptr) members->push_back(pool.patches[i]);
  }
  if (!px.empty()) d.pixels = stack(px);
  return d;
}

void save_bank(const fs::path& dir, const std::string& name, const std::vector<Patch>& members,
               const Tensor& pixels, const std::vector<int>* labels = nullptr) {
  write_text(dir / (name + ".idx"), format_index(members));
  TnsrFile f;
  if (!members.empty()) f.add("pixels", pixels);
  if (labels != nullptr) {
    f.add("labels", {static_cast<std::uint32_t>(labels->size())},
          std::vector<float>(labels->begin(), labels->end()));
  }
  f.save(dir / (name + ".tnsr"));
}

PatchBank load_bank(const fs::path& dir, const std::string& name, Degradation label) {
  require(dir / (name + ".idx"), "partition");
  require(dir / (name + ".tnsr"), "partition");
  PatchBank b;
  b.set.label = label;
  b.set.members = parse_index(read_text(dir / (name + ".idx")));
  const TnsrFile f = TnsrFile::load(dir / (name + ".tnsr"));
  if (!b.set.members.empty()) b.pixels = f.tensor("pixels");
  if (b.pixels.shape().n != b.set.members.size()) {
    throw FormatError((dir / name).string() + ": index and pixel dump disagree in count");
  }
  return b;
}

LabeledPatches load_labeled(const fs::path& dir, const std::string& name) {
  require(dir / (name + ".tnsr"), "partition");
  const TnsrFile f = TnsrFile::load(dir / (name + ".tnsr"));
  LabeledPatches d;
  if (!f.contains("labels")) throw FormatError((dir / name).string() + ": no labels entry");
  for (float v : f.get("labels").data) d.labels.push_back(static_cast<int>(v));
  if (!d.labels.empty()) d.pixels = f.tensor("pixels");
  if (d.pixels.shape().n != d.labels.size()) throw FormatError((dir / name).string() + ": label count mismatch");
  return d;
}

ExtractorWeights pretrain(const PipelineConfig& cfg, const LabeledPatches& data, TrainReport* report) {
  if (data.labels.empty()) throw ParamError("extractor pretraining: no labeled detector-friendly patches");
  PretrainOptions opts;
  opts.iterations = cfg.pretrain_iters;
  opts.batch = cfg.pretrain_batch;
  opts.lr = cfg.pretrain_lr;
  opts.weight_decay = cfg.pretrain_weight_decay;
  opts.momentum = cfg.train.momentum;
  opts.seed = derive_seed(cfg.seed, "extractor");
  PretrainReport pr;
  ExtractorWeights w =
      pretrain_extractor(data.pixels, data.labels, ExtractorConfig{3, cfg.c0, cfg.c1}, opts, &pr);
  if (report != nullptr) {
    report->stage = "pretrain";
    report->seed = opts.seed;
    report->trace = pr.loss_trace;
    report->config = {{"iterations", std::to_string(opts.iterations)},
                      {"batch", std::to_string(opts.batch)},
                      {"lr", fmt_num(opts.lr)},
                      {"weight_decay", fmt_num(opts.weight_decay)},
                      {"momentum", fmt_num(opts.momentum)}};
    report->metrics = {{"classes", std::to_string(pr.classes)},
                       {"patches", std::to_string(data.labels.size())},
                       {"train_accuracy", fmt_num(pr.train_accuracy)}};
  }
  return w;
}

// Loads extractor.tnsr, pretraining it first when absent.
ExtractorWeights obtain_extractor(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  const fs::path path = out / "extractor.tnsr";
  if (fs::exists(path)) return extractor_from(TnsrFile::load(path));
  log << "pretraining extractor on partition/pretrain_f\n";
  TrainReport rep;
  const ExtractorWeights w = pretrain(cfg, load_labeled(out / "partition", "pretrain_f"), &rep);
  TnsrFile f;
  add_extractor(f, w);
  f.save(path);
  write_text(out / "extractor_report.txt", format_report(rep));
  log << "extractor train accuracy " << rep.metric("train_accuracy").value_or("?") << "\n";
  return w;
}

ExtractorWeights load_extractor(const fs::path& out) {
  require(out / "extractor.tnsr", "train");
  return extractor_from(TnsrFile::load(out / "extractor.tnsr"));
}

RftmParams load_rftm(const fs::path& out) {
  require(out / "rftm.tnsr", "train");
  return rftm_from(TnsrFile::load(out / "rftm.tnsr"));
}

Stage1Result stage1(const PipelineConfig& cfg, const PatchBank& hd_u, const PatchBank& hd_f,
                    const ExtractorWeights& w) {
  const RftmParams p0 = init_rftm(rftm_config(cfg), derive_seed(cfg.seed, "rftm"), cfg.rftm_init);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "stage1");
  return train_rftm(hd_u, hd_f, w, p0, tc);
}

int max_label(const LabeledPatches& d) { return *std::max_element(d.labels.begin(), d.labels.end()); }

FinetuneResult stage2(const PipelineConfig& cfg, const LabeledPatches& data, const ExtractorWeights& w,
                      const RftmParams& p, std::size_t rep) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "finetune", rep);
  const FinetuneModel init = init_finetune(cfg.c1, static_cast<std::size_t>(max_label(data)) + 1,
                                           derive_seed(tc.seed, "finetune-init"));
  return finetune(data, w, p, init, tc);
}

RftmParams control_rftm(const PipelineConfig& cfg) {
  return init_rftm(rftm_config(cfg), derive_seed(cfg.seed, "rftm"), RftmInit::kZeroResidual);
}

struct Clouds {
  FeatureCloud hd_f, hd_u, hd_tu, ld_f, ld_u;
};

Clouds make_clouds(const PatchBank& hd_u, const PatchBank& hd_f, const PatchBank& ld_u,
                   const PatchBank& ld_f, const ExtractorWeights& w, const RftmParams& p) {
  auto pool_of = [&](const PatchBank& b, CloudTag tag, const RftmParams* rp) {
    if (b.set.members.empty()) {
      FeatureCloud c;
      c.tag = tag;
      c.width = w.c1();
      return c;
    }
    return pool_features(b.pixels, tag, w, rp);
  };
  return Clouds{pool_of(hd_f, CloudTag::kHdF, nullptr), pool_of(hd_u, CloudTag::kHdU, nullptr),
                pool_of(hd_u, CloudTag::kHdTu, &p), pool_of(ld_f, CloudTag::kLdF, nullptr),
                pool_of(ld_u, CloudTag::kLdU, nullptr)};
}

// Evenly spaced subsample of at most `limit` rows.
std::vector<std::size_t> spread(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  const std::size_t m = std::min(n, limit);
  for (std::size_t k = 0; k < m; ++k) idx.push_back(k * n / m);
  return idx;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

MissingArtifact::MissingArtifact(const fs::path& path, std::string_view producer)
    : IoError("missing " + path.string() + " (produced by `hdp " + std::string(producer) + "`)") {}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t k) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : purpose) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return splitmix(splitmix(seed ^ h) + k);
}

std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (const std::string& raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("expected key=value, got '" + std::string(line) + "'");
    kv.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return kv;
}

std::size_t cmd_synth(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const fs::path corpus = out / "corpus";
  std::error_code ec;
  fs::remove_all(corpus, ec);
  if (ec) throw IoError("cannot clear " + corpus.string() + ": " + ec.message());
  std::string manifest = "# id\ttag\n";
  SceneOptions opts;
  opts.classes = cfg.synth_classes;
  opts.dark_fraction = cfg.synth_dark_fraction;
  opts.speckle = cfg.synth_speckle;
  for (SourceTag tag : kTags) {
    const fs::path dir = corpus / tag_dir(tag);
    ensure_dir(dir / "clean");
    const auto& lo = tag == SourceTag::kUnderwater ? cfg.u_airlight_low : cfg.f_airlight_low;
    const auto& hi = tag == SourceTag::kUnderwater ? cfg.u_airlight_high : cfg.f_airlight_high;
    const std::string domain = "synth-" + tag_dir(tag);
    for (std::size_t k = 0; k < cfg.synth_count; ++k) {
      const std::string id = image_id(tag, k);
      const Scene scene = synth_scene(derive_seed(cfg.seed, domain + "-scene", k), cfg.synth_size,
                                      cfg.synth_size, opts);
      const TransmissionMap t = synth_transmission(derive_seed(cfg.seed, domain + "-t", k), cfg.synth_size,
                                                   cfg.synth_size, cfg.synth_t_low, cfg.synth_t_high,
                                                   cfg.synth_grid);
      std::mt19937_64 rng(derive_seed(cfg.seed, domain + "-airlight", k));
      std::array<float, 3> a{};
      for (std::size_t c = 0; c < 3; ++c) {
        a[c] = static_cast<float>(std::uniform_real_distribution<double>(lo[c], hi[c])(rng));
      }
      const Airlight airlight = Airlight::clamped(a[0], a[1], a[2]);
      write_ppm(dir / (id + ".ppm"), degrade(scene.image, t, airlight));
      write_ppm(dir / "clean" / (id + ".ppm"), scene.image);
      write_labels(dir / (id + ".labels"), scene.labels);
      TnsrFile truth;
      truth.add("transmission", {static_cast<std::uint32_t>(t.height()), static_cast<std::uint32_t>(t.width())},
                t.data());
      truth.add("airlight", {3}, {airlight.rgb[0], airlight.rgb[1], airlight.rgb[2]});
      truth.save(dir / (id + ".truth.tnsr"));
      manifest += id + "\t" + tag_dir(tag) + "\n";
    }
  }
  ensure_dir(corpus);
  write_text(corpus / "manifest.tsv", manifest);
  echo_config(cfg, out, "synth");
  log << "synth: " << cfg.synth_count << " scenes per domain under " << corpus.string() << "\n";
  return 2 * cfg.synth_count;
}

EstimateSummary cmd_estimate(const PipelineConfig& cfg, const fs::path& out, std::ostream& log,
                             const std::optional<fs::path>& input) {
  cfg.validate();
  std::vector<std::pair<fs::path, std::string>> dirs;
  if (input) {
    if (!fs::is_directory(*input)) throw IoError("not a directory: " + input->string());
    dirs.emplace_back(*input, input->filename().empty() ? input->parent_path().filename().string()
                                                        : input->filename().string());
  } else {
    for (SourceTag tag : kTags) {
      const fs::path dir = out / "corpus" / tag_dir(tag);
      require(dir, "synth");
      dirs.emplace_back(dir, tag_dir(tag));
    }
  }
  EstimateSummary s;
  std::string summary = "# image\tmean_t\tairlight_r\tairlight_g\tairlight_b\n";
  for (const auto& [dir, name] : dirs) {
    const auto stems = ppm_stems(dir);
    if (stems.empty()) throw IoError("no .ppm files in " + dir.string());
    const fs::path maps = out / "maps" / name;
    ensure_dir(maps);
    for (const auto& id : stems) {
      try {
        const Image img = read_ppm(dir / (id + ".ppm"));
        const Airlight a = estimate_airlight(img, cfg.udcp_window);
        const TransmissionMap t = estimate_transmission(img, a, cfg.udcp_window, cfg.udcp_omega);
        TnsrFile f;
        f.add("transmission", {static_cast<std::uint32_t>(t.height()), static_cast<std::uint32_t>(t.width())},
              t.data());
        f.add("airlight", {3}, {a.rgb[0], a.rgb[1], a.rgb[2]});
        f.save(maps / (id + ".tnsr"));
        double sum = 0.0;
        for (float v : t.data()) sum += v;
        summary += name + "/" + id + "\t" + fmt_num(sum / static_cast<double>(t.data().size())) + "\t" +
                   fmt_num(a.rgb[0]) + "\t" + fmt_num(a.rgb[1]) + "\t" + fmt_num(a.rgb[2]) + "\n";
        ++s.ok;
      } catch (const Error& e) {
        log << "error: " << (dir / (id + ".ppm")).string() << ": " << e.what() << "\n";
        ++s.failed;
      }
    }
  }
  write_text(out / "maps" / "summary.tsv", summary);
  echo_config(cfg, out, "estimate");
  log << "estimate: " << s.ok << " maps written, " << s.failed << " failed\n";
  return s;
}

PartitionCounts cmd_partition(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  std::optional<std::set<std::string>> allowed;
  PartitionCounts c;
  if (!cfg.scores_path.empty()) {
    const DfuiGate gate = parse_scores(read_text(cfg.scores_path), cfg.ap_threshold);
    const auto ids = select_dfui(gate);
    allowed.emplace(ids.begin(), ids.end());
    c.dfui_selected = ids.size();
    if (ids.empty()) log << "warning: no detector-friendly image passes AP >= " << fmt_num(cfg.ap_threshold) << "\n";
  }
  const PatchPool u = load_pool(cfg, out, SourceTag::kUnderwater, nullptr);
  const PatchPool f = load_pool(cfg, out, SourceTag::kFriendly, allowed ? &*allowed : nullptr);
  const PatchPool clean_f = load_pool(cfg, out, SourceTag::kFriendly, nullptr, true);
  c.u_patches = u.patches.size();
  c.f_patches = f.patches.size();

  const fs::path dir = out / "partition";
  ensure_dir(dir);
  struct BankSplit {
    const PatchPool* pool;
    bool heavy;
    const char* name;
    std::size_t* count;
  };
  for (const BankSplit& s : {BankSplit{&u, true, "HD_u", &c.hd_u}, BankSplit{&f, true, "HD_f", &c.hd_f},
                        BankSplit{&u, false, "LD_u", &c.ld_u}, BankSplit{&f, false, "LD_f", &c.ld_f}}) {
    const auto all = select(*s.pool, cfg.threshold, s.heavy);
    *s.count = all.size();
    const PatchBank b = make_bank(*s.pool, cap(all, cfg.max_patches),
                                  s.heavy ? Degradation::kHeavy : Degradation::kLight, cfg.threshold);
    save_bank(dir, s.name, b.set.members, b.pixels);
  }
  for (const auto& [pool, name, limit, count] :
       {std::tuple{&u, "labeled_u", cfg.finetune_max_patches, &c.labeled_u},
        std::tuple{&clean_f, "pretrain_f", clean_f.patches.size(), &c.pretrain_f}}) {
    std::vector<Patch> members;
    const LabeledPatches d = make_labeled(*pool, limit, &members);
    *count = members.size();
    save_bank(dir, name, members, d.pixels, &d.labels);
  }
  std::vector<std::pair<std::string, std::string>> kv = {
      {"threshold", fmt_num(cfg.threshold)},
      {"aggregate", aggregate_name(cfg.aggregate)},
      {"u_patches", std::to_string(c.u_patches)},
      {"f_patches", std::to_string(c.f_patches)},
      {"hd_u", std::to_string(c.hd_u)},
      {"ld_u", std::to_string(c.ld_u)},
      {"hd_f", std::to_string(c.hd_f)},
      {"ld_f", std::to_string(c.ld_f)},
      {"max_patches", std::to_string(cfg.max_patches)},
      {"labeled_u", std::to_string(c.labeled_u)},
      {"pretrain_f", std::to_string(c.pretrain_f)},
      {"dfui_selected", c.dfui_selected ? std::to_string(*c.dfui_selected) : "none"},
  };
  write_text(dir / "counts.txt", format_key_values(kv));
  echo_config(cfg, out, "partition");
  log << "partition (T=" << fmt_num(cfg.threshold) << "): HD_u " << c.hd_u << ", LD_u " << c.ld_u << ", HD_f "
      << c.hd_f << ", LD_f " << c.ld_f << " (at most " << cfg.max_patches << " kept per set)\n";
  return c;
}

TrainReport cmd_train(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const fs::path dir = out / "partition";
  const PatchBank hd_u = load_bank(dir, "HD_u", Degradation::kHeavy);
  const PatchBank hd_f = load_bank(dir, "HD_f", Degradation::kHeavy);
  const ExtractorWeights w = obtain_extractor(cfg, out, log);
  Stage1Result r = stage1(cfg, hd_u, hd_f, w);
  TnsrFile f;
  add_rftm(f, r.params);
  f.save(out / "rftm.tnsr");
  write_text(out / "train_report.txt", format_report(r.report));
  echo_config(cfg, out, "train");
  const double s0 = smoothed_start(r.report.trace, kSmoothWindow), s1 = smoothed_end(r.report.trace, kSmoothWindow);
  log << "train: " << r.report.trace.size() << " iterations, smoothed KL " << fmt_num(s0) << " -> " << fmt_num(s1)
      << " (ratio " << fmt_num(s0 > 0.0 ? s1 / s0 : 0.0) << ", " << fmt_num(r.report.wall_seconds) << " s)\n";
  return r.report;
}

FinetuneSummary cmd_finetune(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const LabeledPatches data = load_labeled(out / "partition", "labeled_u");
  const ExtractorWeights w = load_extractor(out);
  const RftmParams p = load_rftm(out);
  const RftmParams control = control_rftm(cfg);
  FinetuneSummary s;
  TrainReport report;
  FinetuneModel model;
  for (std::size_t rep = 0; rep < cfg.finetune_repeats; ++rep) {
    FinetuneResult trained = stage2(cfg, data, w, p, rep);
    const FinetuneResult ctrl = stage2(cfg, data, w, control, rep);
    s.accuracy.push_back(trained.heldout_accuracy);
    s.control_accuracy.push_back(ctrl.heldout_accuracy);
    s.wins += trained.heldout_accuracy >= ctrl.heldout_accuracy ? 1 : 0;
    if (rep == 0) {
      report = std::move(trained.report);
      model = trained.model;
    }
    log << "finetune rep " << rep << ": accuracy " << fmt_num(s.accuracy.back()) << ", control "
        << fmt_num(s.control_accuracy.back()) << "\n";
  }
  for (std::size_t rep = 0; rep < cfg.finetune_repeats; ++rep) {
    report.metrics.emplace_back("accuracy_" + std::to_string(rep), fmt_num(s.accuracy[rep]));
    report.metrics.emplace_back("control_accuracy_" + std::to_string(rep), fmt_num(s.control_accuracy[rep]));
  }
  report.metrics.emplace_back("repeats", std::to_string(cfg.finetune_repeats));
  report.metrics.emplace_back("wins", std::to_string(s.wins));
  report.metrics.emplace_back("majority", 2 * s.wins > cfg.finetune_repeats ? "yes" : "no");
  TnsrFile f;
  add_finetune(f, model);
  f.save(out / "finetune.tnsr");
  write_text(out / "finetune_report.txt", format_report(report));
  echo_config(cfg, out, "finetune");
  return s;
}

GapReport cmd_analyze(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const fs::path dir = out / "partition";
  const PatchBank hd_u = load_bank(dir, "HD_u", Degradation::kHeavy);
  const PatchBank hd_f = load_bank(dir, "HD_f", Degradation::kHeavy);
  const PatchBank ld_u = load_bank(dir, "LD_u", Degradation::kLight);
  const PatchBank ld_f = load_bank(dir, "LD_f", Degradation::kLight);
  const ExtractorWeights w = load_extractor(out);
  const RftmParams p = load_rftm(out);
  const Clouds c = make_clouds(hd_u, hd_f, ld_u, ld_f, w, p);

  GapReport g = gap_report(c.hd_f, c.hd_u, c.hd_tu, c.ld_f, c.ld_u);
  const PermutationTest t =
      gap_margin_test(c.hd_u, c.hd_tu, c.hd_f, cfg.permutations, derive_seed(cfg.seed, "permutation"), g.bandwidth);
  g.margin = t.observed;
  g.permutations = cfg.permutations;
  if (cfg.permutations > 0) {
    g.margin_null_p95 = t.null_p95;
    g.margin_p_value = t.p_value;
  }
  write_text(out / "gap_report.txt", format_gap_report(g));

  std::vector<double> rows;
  std::vector<EmbeddingPoint> pts;
  for (const FeatureCloud* cloud : {&c.hd_f, &c.hd_u, &c.hd_tu}) {
    for (std::size_t i : spread(cloud->size(), cfg.tsne_points)) {
      const auto r = cloud->row(i);
      rows.insert(rows.end(), r.begin(), r.end());
      pts.push_back({0.0, 0.0, std::string(cloud_tag_name(cloud->tag))});
    }
  }
  TsneOptions topts;
  topts.perplexity = cfg.tsne_perplexity;
  topts.iterations = cfg.tsne_iters;
  topts.seed = derive_seed(cfg.seed, "tsne");
  const TsneResult e = tsne_embed(rows, pts.size(), w.c1(), topts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i].x = e.points[2 * i];
    pts[i].y = e.points[2 * i + 1];
  }
  write_text(out / "tsne.tsv", format_embedding(pts));
  write_text(out / "tsne_report.txt",
             format_key_values({{"points", std::to_string(pts.size())},
                                {"perplexity", fmt_num(topts.perplexity)},
                                {"iterations", std::to_string(topts.iterations)},
                                {"kl", fmt_num(e.kl)},
                                {"kl_after_exaggeration", fmt_num(e.kl_after_exaggeration)}}));
  echo_config(cfg, out, "analyze");
  log << "analyze: MMD(HD_u,HD_f) " << fmt_num(g.mmd_hd_u_f) << ", MMD(HD_tu,HD_f) " << fmt_num(g.mmd_hd_tu_f)
      << ", verdict " << (g.verdict ? "yes" : "no") << ", margin " << fmt_num(*g.margin);
  if (g.margin_null_p95) log << " vs null p95 " << fmt_num(*g.margin_null_p95);
  log << "\n";
  return g;
}

std::vector<SweepRow> cmd_sweep(const PipelineConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const PatchPool u = load_pool(cfg, out, SourceTag::kUnderwater, nullptr);
  std::optional<std::set<std::string>> allowed;
  if (!cfg.scores_path.empty()) {
    const auto ids = select_dfui(parse_scores(read_text(cfg.scores_path), cfg.ap_threshold));
    allowed.emplace(ids.begin(), ids.end());
  }
  const PatchPool f = load_pool(cfg, out, SourceTag::kFriendly, allowed ? &*allowed : nullptr);
  const ExtractorWeights w = obtain_extractor(cfg, out, log);
  const LabeledPatches labeled = make_labeled(u, cfg.finetune_max_patches, nullptr);
  const double control = stage2(cfg, labeled, w, control_rftm(cfg), 0).heldout_accuracy;

  std::vector<SweepRow> rows;
  for (double t : cfg.sweep_thresholds) {
    PipelineConfig c = cfg;
    c.threshold = t;
    SweepRow row;
    row.threshold = t;
    const auto hu = select(u, t, true), hf = select(f, t, true);
    row.hd_u = hu.size();
    row.hd_f = hf.size();
    row.ld_u = select(u, t, false).size();
    row.ld_f = select(f, t, false).size();
    if (row.hd_u < 2 || row.hd_f < 2) {
      row.skipped = true;
      row.note = row.hd_u == 0 || row.hd_f == 0 ? "empty_HD" : "too_few_HD";
      log << "sweep T=" << fmt_num(t) << ": skipped (" << row.note << ")\n";
      rows.push_back(row);
      continue;
    }
    const PatchBank hd_u = make_bank(u, cap(hu, c.max_patches), Degradation::kHeavy, t);
    const PatchBank hd_f = make_bank(f, cap(hf, c.max_patches), Degradation::kHeavy, t);
    const PatchBank ld_u = make_bank(u, cap(select(u, t, false), c.max_patches), Degradation::kLight, t);
    const PatchBank ld_f = make_bank(f, cap(select(f, t, false), c.max_patches), Degradation::kLight, t);
    const Stage1Result s1 = stage1(c, hd_u, hd_f, w);
    const Clouds clouds = make_clouds(hd_u, hd_f, ld_u, ld_f, w, s1.params);
    const GapReport g = gap_report(clouds.hd_f, clouds.hd_u, clouds.hd_tu, clouds.ld_f, clouds.ld_u);
    row.smoothed_kl = smoothed_end(s1.report.trace, kSmoothWindow);
    row.mmd_hd_u_f = g.mmd_hd_u_f;
    row.mmd_hd_tu_f = g.mmd_hd_tu_f;
    row.verdict = g.verdict;
    row.accuracy = stage2(c, labeled, w, s1.params, 0).heldout_accuracy;
    row.control_accuracy = control;
    log << "sweep T=" << fmt_num(t) << ": KL " << fmt_num(row.smoothed_kl) << ", verdict "
        << (row.verdict ? "yes" : "no") << ", accuracy " << fmt_num(row.accuracy) << " (control "
        << fmt_num(control) << ")\n";
    rows.push_back(row);
  }
  write_text(out / "sweep.tsv", format_sweep(rows));
  const SweepVerdict v = summarize_sweep(rows);
  write_text(out / "sweep_summary.txt",
             format_key_values({{"rows", std::to_string(rows.size())},
                                {"best_threshold", v.best_threshold ? fmt_num(*v.best_threshold) : "none"},
                                {"medium_best", v.medium_best ? "yes" : "no"}}));
  echo_config(cfg, out, "sweep");
  return rows;
}

SweepVerdict summarize_sweep(const std::vector<SweepRow>& rows) {
  SweepVerdict v;
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (!r.skipped && (best == nullptr || r.accuracy > best->accuracy)) best = &r;
  }
  if (best != nullptr) {
    v.best_threshold = best->threshold;
    v.medium_best = best->threshold >= 0.5 - 1e-12 && best->threshold <= 0.7 + 1e-12;
  }
  return v;
}

}  // namespace hdp
