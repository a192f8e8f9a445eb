// hscl: command-line front end (synth, extract, pretrain, retrieve, probe, metrics).
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hscl/error.hpp"
#include "hscl/pipelines/commands.hpp"

namespace {

using namespace hscl;
using namespace hscl::pipelines;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) {
    std::istringstream in(trim(item));
    T v{};
    if (!(in >> v) || !in.eof()) throw ValidationError(std::string("bad value '") + item + "' in " + what);
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(std::string(what) + " is empty");
  return out;
}

// key=value lines become --key=value tokens placed ahead of the command
// line flags, which therefore win.
std::vector<std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path + ":" + std::to_string(number) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key == "config") throw ValidationError(path + ": config files cannot nest");
    tokens.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return tokens;
}

std::vector<std::string> expand_args(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || args.size() < 2) return args;
  auto tokens = read_config(config);
  args.insert(args.begin() + 2, tokens.begin(), tokens.end());
  return args;
}

struct BackboneFlags {
  std::string variant = "seb", stages = "16,32,128", pools = "1,2,2", attention = "after-sum";
  nn::BackboneConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--variant", variant, "conv3d, dsc, cbam, seb or none")->capture_default_str();
    app->add_option("--cardinality", cfg.cardinality)->capture_default_str();
    app->add_option("--stage-channels", stages, "comma list")->capture_default_str();
    app->add_option("--stage-pool", pools, "comma list")->capture_default_str();
    app->add_option("--embedding-dim", cfg.embedding_dim)->capture_default_str();
    app->add_option("--projection-dim", cfg.projection_dim)->capture_default_str();
    app->add_option("--input-pool", cfg.input_pool)->capture_default_str();
    app->add_option("--stem-channels", cfg.stem_channels)->capture_default_str();
    app->add_option("--stem-kernel", cfg.stem_kernel)->capture_default_str();
    app->add_option("--attention", attention, "after-sum or branch")->capture_default_str();
    app->add_option("--cbam-reduction", cfg.cbam_reduction)->capture_default_str();
    app->add_option("--cbam-kernel", cfg.cbam_kernel)->capture_default_str();
    app->add_option("--conv3d-kernel", cfg.conv3d_spectral_kernel)->capture_default_str();
    app->add_option("--standardize", cfg.input_standardize, "per-band input standardization")->capture_default_str();
    app->add_option("--init-gain", cfg.init_gain, "weight init bound multiplier")->capture_default_str();
    app->add_option("--zero-bias", cfg.zero_bias_init, "start biases at zero")->capture_default_str();
  }

  nn::BackboneConfig resolve() {
    cfg.variant = nn::parse_variant(variant);
    cfg.stage_channels = parse_list<std::size_t>(stages, "--stage-channels");
    cfg.stage_pool = parse_list<std::size_t>(pools, "--stage-pool");
    if (attention == "after-sum") {
      cfg.attention_position = nn::AttentionPosition::kAfterSum;
    } else if (attention == "branch") {
      cfg.attention_position = nn::AttentionPosition::kBranch;
    } else {
      throw ValidationError("--attention must be after-sum or branch");
    }
    return cfg;
  }
};

struct AugmentFlags {
  double hflip = 0.5, vflip = 0.5, rot90 = 0.5;
  double crop_min = 0.3, crop_max = 1.0, crop_p = 1.0;
  double gain_min = 0.8, gain_max = 1.2;
  double noise = 0.01, dropout = 0.0;
  double offset = 0.0, continuum = 0.0;
  std::size_t continuum_degree = 2;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--aug-hflip", hflip, "probability")->capture_default_str();
    app->add_option("--aug-vflip", vflip, "probability")->capture_default_str();
    app->add_option("--aug-rot90", rot90, "probability")->capture_default_str();
    app->add_option("--aug-crop-min", crop_min, "minimum area fraction")->capture_default_str();
    app->add_option("--aug-crop-max", crop_max, "maximum area fraction")->capture_default_str();
    app->add_option("--aug-crop-p", crop_p, "probability")->capture_default_str();
    app->add_option("--aug-gain-min", gain_min)->capture_default_str();
    app->add_option("--aug-gain-max", gain_max)->capture_default_str();
    app->add_option("--aug-noise", noise, "spectral noise sigma")->capture_default_str();
    app->add_option("--aug-band-dropout", dropout, "per-band probability")->capture_default_str();
    app->add_option("--aug-offset", offset, "offset half-range")->capture_default_str();
    app->add_option("--aug-continuum", continuum, "continuum amplitude")->capture_default_str();
    app->add_option("--aug-continuum-degree", continuum_degree)->capture_default_str();
    app->add_option("--aug-seed", seed)->capture_default_str();
  }

  // Disabled ops (zero probability or amplitude) are left out.
  contrastive::AugmentationSpec resolve() const {
    using namespace contrastive;
    AugmentationSpec spec;
    spec.seed = seed;
    if (hflip > 0) spec.ops.push_back(HorizontalFlip{hflip});
    if (vflip > 0) spec.ops.push_back(VerticalFlip{vflip});
    if (rot90 > 0) spec.ops.push_back(Rotate90{rot90});
    if (crop_p > 0) spec.ops.push_back(CropResize{crop_min, crop_max, crop_p});
    if (gain_min != 1.0 || gain_max != 1.0) spec.ops.push_back(Brightness{gain_min, gain_max});
    if (noise > 0) spec.ops.push_back(SpectralNoise{noise});
    if (dropout > 0) spec.ops.push_back(BandDropout{dropout});
    if (offset > 0) spec.ops.push_back(Offset{-offset, offset});
    if (continuum > 0) spec.ops.push_back(Continuum{continuum, continuum_degree});
    spec.validate();
    return spec;
  }
};

void print_manifest_note(const RunManifest& m) {
  for (const auto& o : m.outputs) std::cerr << "wrote " << o << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Hyperspectral contrastive learning toolkit"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "key=value file; flags override it"); };

  // synth
  SynthCommand synth;
  auto* s = app.add_subcommand("synth", "generate a labelled synthetic cube");
  add_config(s);
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--classes", synth.spec.classes)->capture_default_str();
  s->add_option("--height", synth.spec.height)->capture_default_str();
  s->add_option("--width", synth.spec.width)->capture_default_str();
  s->add_option("--bands", synth.spec.bands)->capture_default_str();
  s->add_option("--noise", synth.spec.noise_sigma)->capture_default_str();
  s->add_option("--region-size", synth.spec.region_size)->capture_default_str();
  s->add_option("--contrast", synth.spec.class_contrast)->capture_default_str();
  s->add_option("--gain-min", synth.spec.brightness_min)->capture_default_str();
  s->add_option("--gain-max", synth.spec.brightness_max)->capture_default_str();
  s->add_option("--offset-min", synth.spec.offset_min)->capture_default_str();
  s->add_option("--offset-max", synth.spec.offset_max)->capture_default_str();
  s->add_option("--continuum", synth.spec.continuum_amplitude)->capture_default_str();
  s->add_option("--continuum-degree", synth.spec.continuum_degree)->capture_default_str();
  s->add_option("--paired", synth.spec.paired_materials, "two-material classes")->capture_default_str();
  s->add_option("--fraction-min", synth.spec.class_fraction_min)->capture_default_str();
  s->add_option("--fraction-max", synth.spec.class_fraction_max)->capture_default_str();
  s->add_option("--blob-scale", synth.spec.blob_scale)->capture_default_str();
  s->add_option("--out", synth.cube_out, "cube file (HKC1)")->required();
  s->add_option("--labels", synth.labels_out, "label file (HKL1)")->required();
  s->add_option("--manifest", synth.manifest);

  // extract
  ExtractCommand extract;
  auto* e = app.add_subcommand("extract", "cut a cube into a patch archive");
  add_config(e);
  e->add_option("--cube", extract.cube)->required();
  e->add_option("--labels", extract.labels);
  e->add_option("--patch-size", extract.grid.patch_size)->capture_default_str();
  e->add_option("--overlap", extract.grid.overlap_fraction)->capture_default_str();
  e->add_option("--cube-id", extract.cube_id);
  e->add_option("--out", extract.archive_out)->required();
  e->add_option("--manifest", extract.manifest);

  // pretrain
  PretrainCommand pre;
  BackboneFlags backbone;
  AugmentFlags aug;
  std::string bands = "full", decay_at = "0.4,0.8";
  auto* p = app.add_subcommand("pretrain", "contrastive pretraining on a patch archive");
  add_config(p);
  p->add_option("--patches", pre.archive)->required();
  p->add_option("--out", pre.out_dir, "model directory")->required();
  backbone.add(p);
  aug.add(p);
  p->add_option("--bands", bands, "full, manual:i,j,... or pca:N")->capture_default_str();
  p->add_option("--epochs", pre.training.epochs)->capture_default_str();
  p->add_option("--batch", pre.training.batch)->capture_default_str();
  p->add_option("--tau", pre.training.tau)->capture_default_str();
  p->add_option("--include-self", pre.training.include_self, "keep j=i in the denominator")->capture_default_str();
  p->add_option("--lr", pre.training.learning_rate)->capture_default_str();
  p->add_option("--decay-at", decay_at, "fractions of total steps")->capture_default_str();
  p->add_option("--decay-factor", pre.training.decay_factor)->capture_default_str();
  p->add_option("--seed", pre.training.seed)->capture_default_str();
  p->add_option("--init-seed", pre.init_seed)->capture_default_str();
  p->add_option("--checkpoint-every", pre.training.checkpoint_every, "epochs; 0 disables")->capture_default_str();

  // retrieve
  RetrieveCommand ret;
  auto* r = app.add_subcommand("retrieve", "Top-K retrieval accuracy of a model");
  add_config(r);
  r->add_option("--model", ret.model_dir)->required();
  r->add_option("--patches", ret.archive)->required();
  r->add_option("--k", ret.k)->capture_default_str();
  r->add_option("--out", ret.report_out);
  r->add_option("--manifest", ret.manifest);

  // probe
  ProbeCommand probe;
  auto* pr = app.add_subcommand("probe", "linear probe on frozen embeddings");
  add_config(pr);
  pr->add_option("--model", probe.model_dir)->required();
  pr->add_option("--patches", probe.archive)->required();
  pr->add_option("--train-fraction", probe.probe.train_fraction)->capture_default_str();
  pr->add_option("--steps", probe.probe.steps)->capture_default_str();
  pr->add_option("--lr", probe.probe.learning_rate)->capture_default_str();
  pr->add_option("--seed", probe.probe.seed)->capture_default_str();
  pr->add_option("--shuffle-labels", probe.probe.shuffle_labels, "control run")->capture_default_str();
  pr->add_option("--out", probe.report_out);
  pr->add_option("--manifest", probe.manifest);

  // metrics
  MetricsCommand met;
  double ratio = 0.0;
  auto* m = app.add_subcommand("metrics", "reconstruction metrics between two cubes");
  add_config(m);
  m->add_option("--ref", met.reference)->required();
  m->add_option("--est", met.estimate)->required();
  auto* ratio_opt = m->add_option("--ratio", ratio, "ERGAS resolution ratio (default 0.25)");
  m->add_option("--peak", met.peak)->capture_default_str();
  m->add_option("--model", met.model_dir, "adds HSPL");
  m->add_option("--hspl-patch", met.hspl_patch)->capture_default_str();
  m->add_option("--out", met.report_out, "appended to");
  m->add_option("--manifest", met.manifest);

  const auto args = expand_args(argc, argv);
  std::vector<const char*> raw;
  for (const auto& a : args) raw.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(raw.size()), const_cast<char**>(raw.data()));
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  if (s->parsed()) {
    print_manifest_note(cmd_synth(synth));
  } else if (e->parsed()) {
    print_manifest_note(cmd_extract(extract));
  } else if (p->parsed()) {
    pre.backbone = backbone.resolve();
    pre.augmentation = aug.resolve();
    pre.bands = BandRequest::parse(bands);
    pre.training.decay_at = decay_at.empty() ? std::vector<double>{} : parse_list<double>(decay_at, "--decay-at");
    pre.training.on_epoch = [](const contrastive::EpochStats& st) { std::cout << st.to_tsv() << std::endl; };
    print_manifest_note(cmd_pretrain(pre));
  } else if (r->parsed()) {
    cmd_retrieve(ret, std::cout);
  } else if (pr->parsed()) {
    cmd_probe(probe, std::cout, std::cerr);
  } else if (m->parsed()) {
    if (ratio_opt->count() > 0) met.ergas_ratio = ratio;
    cmd_metrics(met, std::cout, std::cerr);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hscl::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
