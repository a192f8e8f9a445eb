#include "hscl/pipelines/commands.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "hscl/error.hpp"
#include "hscl/hsi/io.hpp"
#include "hscl/metrics/hspl.hpp"
#include "hscl/metrics/reconstruction.hpp"
#include "hscl/nn/checkpoint.hpp"
#include "hscl/pipelines/archive.hpp"
#include "json.hpp"

namespace hscl::pipelines {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ",") + num(x);
  return out;
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw ValidationError(std::string(what) + " not found: " + path.string());
}

void require_output(const fs::path& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string(what) + " path is required");
  const auto parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ValidationError(std::string(what) + " directory does not exist: " + parent.string());
  }
}

fs::path with_suffix(const fs::path& p, const char* suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  hsi::write_atomically(path, [&](std::ostream& out) { out << text; });
}

// Report text goes to a file (atomically) or to `out`.
void emit(const fs::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

std::vector<std::uint16_t> labels_of(const std::vector<hsi::Patch>& patches) {
  std::vector<std::uint16_t> labels;
  for (const auto& p : patches) labels.push_back(p.label);
  return labels;
}

hsi::BandSelector fit_selector(const BandRequest& req, const std::vector<hsi::Patch>& patches) {
  const std::size_t bands = patches.front().bands();
  switch (req.mode) {
    case BandRequest::Mode::kFull: return hsi::BandSelector::full();
    case BandRequest::Mode::kManual: return hsi::BandSelector::manual(req.indices, bands);
    case BandRequest::Mode::kPca: {
      if (req.components > bands) {
        throw ValidationError("PCA asks for " + std::to_string(req.components) + " components of " +
                              std::to_string(bands) + " bands");
      }
      return hsi::BandSelector::pca(hsi::fit_pca(patches, hsi::PcaOptions{req.components, 0, 0}));
    }
  }
  return hsi::BandSelector::full();
}

void finish_manifest(RunManifest& m, const fs::path& path) {
  if (path.empty()) return;
  m.outputs.push_back(path.string());
  m.save(path);
}

}  // namespace

// ---- band selection ----

BandRequest BandRequest::parse(const std::string& text) {
  BandRequest r;
  if (text == "full") return r;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto count = [&](const std::string& s) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (s.empty() || pos != s.size() || s[0] == '-') throw ValidationError("bad band index '" + s + "' in '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  if (kind == "pca" && !rest.empty()) {
    r.mode = Mode::kPca;
    r.components = count(rest);
    if (r.components == 0) throw ValidationError("PCA needs at least one component");
    return r;
  }
  if (kind == "manual" && !rest.empty()) {
    r.mode = Mode::kManual;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) r.indices.push_back(count(item));
    return r;
  }
  throw ValidationError("band selection must be full, manual:i,j,... or pca:N; got '" + text + "'");
}

std::string BandRequest::to_string() const {
  switch (mode) {
    case Mode::kFull: return "full";
    case Mode::kPca: return "pca:" + std::to_string(components);
    case Mode::kManual: {
      std::string out = "manual:";
      for (std::size_t i = 0; i < indices.size(); ++i) out += (i ? "," : "") + std::to_string(indices[i]);
      return out;
    }
  }
  return "full";
}

void save_band_selector(const hsi::BandSelector& selector, std::size_t input_bands, const fs::path& path) {
  nlohmann::ordered_json j;
  j["input_bands"] = input_bands;
  if (const auto* m = std::get_if<hsi::ManualBands>(&selector.mode())) {
    j["mode"] = "manual";
    j["indices"] = m->indices;
  } else if (const auto* p = std::get_if<hsi::PcaBands>(&selector.mode())) {
    j["mode"] = "pca";
    j["components"] = p->components;
    j["mean"] = p->mean;
    j["basis"] = p->basis;
    j["eigenvalues"] = p->eigenvalues;
    j["degenerate"] = p->degenerate;
  } else {
    j["mode"] = "full";
  }
  write_text(path, j.dump(1) + "\n");
}

hsi::BandSelector load_band_selector(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    const std::string mode = j.at("mode");
    const std::size_t input_bands = j.at("input_bands");
    if (mode == "full") return hsi::BandSelector::full();
    if (mode == "manual") return hsi::BandSelector::manual(j.at("indices").get<std::vector<std::size_t>>(), input_bands);
    if (mode == "pca") {
      hsi::PcaBands p;
      p.input_bands = input_bands;
      p.components = j.at("components");
      p.mean = j.at("mean").get<std::vector<double>>();
      p.basis = j.at("basis").get<std::vector<double>>();
      p.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
      p.degenerate = j.at("degenerate");
      return hsi::BandSelector::pca(std::move(p));
    }
    throw RuntimeError("unknown band selection mode '" + mode + "' in " + path.string());
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError("malformed " + path.string() + ": " + e.what());
  }
}

// ---- synth ----

void SynthCommand::validate() const {
  spec.validate();
  require_output(cube_out, "cube output");
  require_output(labels_out, "label output");
  if (cube_out == labels_out) throw ValidationError("cube and label outputs must differ");
}

ConfigSnapshot SynthCommand::snapshot() const {
  return {{"seed", std::to_string(seed)},
          {"classes", std::to_string(spec.classes)},
          {"height", std::to_string(spec.height)},
          {"width", std::to_string(spec.width)},
          {"bands", std::to_string(spec.bands)},
          {"noise", num(spec.noise_sigma)},
          {"region_size", std::to_string(spec.region_size)},
          {"contrast", num(spec.class_contrast)},
          {"brightness_min", num(spec.brightness_min)},
          {"brightness_max", num(spec.brightness_max)},
          {"offset_min", num(spec.offset_min)},
          {"offset_max", num(spec.offset_max)},
          {"continuum", num(spec.continuum_amplitude)},
          {"continuum_degree", std::to_string(spec.continuum_degree)},
          {"paired", spec.paired_materials ? "true" : "false"},
          {"class_fraction_min", num(spec.class_fraction_min)},
          {"class_fraction_max", num(spec.class_fraction_max)},
          {"blob_scale", std::to_string(spec.blob_scale)},
          {"cube_out", cube_out.string()},
          {"labels_out", labels_out.string()}};
}

RunManifest cmd_synth(const SynthCommand& cmd) {
  cmd.validate();
  const auto t0 = Clock::now();
  RunManifest m;
  m.command = "synth";
  m.config = cmd.snapshot();
  const auto scene = hsi::synth_cube(cmd.seed, cmd.spec);
  m.timings_s.emplace_back("generate", seconds_since(t0));
  const auto t1 = Clock::now();
  hsi::save_cube(scene.cube, cmd.cube_out);
  hsi::save_labels(scene.labels, cmd.labels_out);
  m.timings_s.emplace_back("write", seconds_since(t1));
  m.outputs = {cmd.cube_out.string(), cmd.labels_out.string()};
  finish_manifest(m, cmd.manifest.empty() ? with_suffix(cmd.cube_out, ".manifest.json") : cmd.manifest);
  return m;
}

// ---- extract ----

void ExtractCommand::validate() const {
  grid.validate();
  require_file(cube, "cube");
  if (!labels.empty()) require_file(labels, "label raster");
  require_output(archive_out, "archive output");
}

ConfigSnapshot ExtractCommand::snapshot() const {
  return {{"cube", cube.string()},
          {"labels", labels.string()},
          {"patch_size", std::to_string(grid.patch_size)},
          {"overlap", num(grid.overlap_fraction)},
          {"cube_id", cube_id},
          {"out", archive_out.string()}};
}

RunManifest cmd_extract(const ExtractCommand& cmd) {
  cmd.validate();
  const auto t0 = Clock::now();
  RunManifest m;
  m.command = "extract";
  m.config = cmd.snapshot();
  m.add_input(cmd.cube);
  const auto cube = hsi::load_cube(cmd.cube);
  std::optional<hsi::LabelRaster> labels;
  if (!cmd.labels.empty()) {
    m.add_input(cmd.labels);
    labels = hsi::load_labels(cmd.labels);
    if (labels->height != cube.height || labels->width != cube.width) {
      throw ValidationError("label raster does not match the cube size");
    }
  }
  if (cube.height < cmd.grid.patch_size || cube.width < cmd.grid.patch_size) {
    throw ValidationError("cube " + std::to_string(cube.height) + "x" + std::to_string(cube.width) +
                          " is smaller than the patch size " + std::to_string(cmd.grid.patch_size));
  }
  const std::string id = cmd.cube_id.empty() ? cmd.cube.filename().string() : cmd.cube_id;
  const auto patches = hsi::extract_patches(cube, cmd.grid, id, labels ? &*labels : nullptr);
  save_archive(patches, cmd.archive_out);
  m.timings_s.emplace_back("extract", seconds_since(t0));
  m.config.emplace_back("patch_count", std::to_string(patches.size()));
  m.outputs = {cmd.archive_out.string()};
  finish_manifest(m, cmd.manifest.empty() ? with_suffix(cmd.archive_out, ".manifest.json") : cmd.manifest);
  return m;
}

// ---- pretrain ----

void PretrainCommand::validate() const {
  require_file(archive, "patch archive");
  if (out_dir.empty()) throw ValidationError("output directory is required");
  if (fs::exists(out_dir) && !fs::is_directory(out_dir)) {
    throw ValidationError("output path exists and is not a directory: " + out_dir.string());
  }
  backbone.validate();
  augmentation.validate();
  if (training.batch < 1) throw ValidationError("batch size must be at least 1");
  training.validate(training.batch);
}

ConfigSnapshot PretrainCommand::snapshot() const {
  ConfigSnapshot s{{"patches", archive.string()},
                   {"out_dir", out_dir.string()},
                   {"bands", bands.to_string()},
                   {"epochs", std::to_string(training.epochs)},
                   {"batch", std::to_string(training.batch)},
                   {"tau", num(training.tau)},
                   {"include_self", training.include_self ? "true" : "false"},
                   {"lr", num(training.learning_rate)},
                   {"decay_at", list(training.decay_at)},
                   {"decay_factor", num(training.decay_factor)},
                   {"seed", std::to_string(training.seed)},
                   {"init_seed", std::to_string(init_seed)},
                   {"checkpoint_every", std::to_string(training.checkpoint_every)},
                   {"augmentation", contrastive::to_string(augmentation)}};
  std::istringstream cfg(backbone.to_text());
  std::string line;
  while (std::getline(cfg, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) s.emplace_back("backbone." + line.substr(0, eq), line.substr(eq + 1));
  }
  return s;
}

RunManifest cmd_pretrain(const PretrainCommand& cmd) {
  cmd.validate();
  const auto t0 = Clock::now();
  RunManifest m;
  m.command = "pretrain";
  m.add_input(cmd.archive);
  const auto patches = load_archive(cmd.archive);
  if (patches.size() < cmd.training.batch) {
    throw ValidationError("archive holds " + std::to_string(patches.size()) + " patches, fewer than the batch size " +
                          std::to_string(cmd.training.batch));
  }
  const auto selector = fit_selector(cmd.bands, patches);
  nn::BackboneConfig config = cmd.backbone;
  config.input_bands = selector.output_bands(patches.front().bands());
  config.validate();

  std::vector<nn::Tensor> raw, selected;
  for (const auto& p : patches) {
    if (p.bands() != patches.front().bands() || p.side() != patches.front().side() || p.data.width != p.side()) {
      throw ValidationError("archive patches differ in shape or are not square");
    }
    raw.push_back(contrastive::to_tensor(p.data));
    selected.push_back(contrastive::to_tensor(hsi::select_bands(p, selector).data));
  }
  config.validate_patch(config.input_bands, patches.front().side());

  auto params = nn::init_parameters(config, cmd.init_seed);
  nn::fit_input_standardization(config, selected, params);

  const ModelFiles files{cmd.out_dir};
  fs::create_directories(cmd.out_dir);
  contrastive::PretrainOptions opts = cmd.training;
  if (!selector.is_full()) {
    opts.view_transform = [&selector](const nn::Tensor& t) { return contrastive::select_bands(t, selector); };
  }
  std::vector<std::string> checkpoints;
  opts.on_checkpoint = [&](std::size_t epoch, const nn::ParameterSet& p) {
    char name[32];
    std::snprintf(name, sizeof name, "params_epoch%04zu.hkw", epoch);
    nn::save_parameters(p, cmd.out_dir / name);
    checkpoints.push_back((cmd.out_dir / name).string());
  };
  m.timings_s.emplace_back("prepare", seconds_since(t0));

  const auto t1 = Clock::now();
  const auto result = contrastive::pretrain(raw, config, cmd.augmentation, opts, std::move(params));
  m.timings_s.emplace_back("train", seconds_since(t1));

  std::string log = "epoch\tloss\tpositive_sim\thard_negative_sim\tlr\n";
  for (const auto& e : result.log) log += e.to_tsv() + "\n";
  nn::save_config(config, files.config());
  nn::save_parameters(result.params, files.params());
  save_band_selector(selector, patches.front().bands(), files.bands());
  write_text(files.loss_log(), log);

  PretrainCommand resolved = cmd;
  resolved.backbone = config;
  m.config = resolved.snapshot();
  m.outputs = {files.config().string(), files.params().string(), files.bands().string(), files.loss_log().string()};
  m.outputs.insert(m.outputs.end(), checkpoints.begin(), checkpoints.end());
  finish_manifest(m, files.manifest());
  return m;
}

// ---- model loading ----

Model load_model(const fs::path& dir) {
  const ModelFiles files{dir};
  for (const auto& p : {files.config(), files.params(), files.bands()}) {
    if (!fs::is_regular_file(p)) throw ValidationError("model directory lacks " + p.filename().string());
  }
  Model model{nn::load_config(files.config()), nn::load_parameters(files.params()), load_band_selector(files.bands())};
  try {
    nn::check_parameters(model.config, model.params);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("checkpoint does not match its config: ") + e.what());
  }
  return model;
}

std::vector<metrics::Embedding> embed_patches(Model& model, const std::vector<hsi::Patch>& patches) {
  std::vector<metrics::Embedding> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    model.bands.check_input(p.bands());
    const auto x = contrastive::to_tensor(hsi::select_bands(p, model.bands).data);
    if (x.extent(0) != model.config.input_bands) {
      throw ValidationError("patch has " + std::to_string(x.extent(0)) + " channels after band selection, model expects " +
                            std::to_string(model.config.input_bands));
    }
    const auto e = nn::embed(x, model.config, model.params);
    out.emplace_back(e.values().begin(), e.values().end());
  }
  return out;
}

// ---- retrieve ----

void RetrieveCommand::validate() const {
  if (model_dir.empty()) throw ValidationError("model directory is required");
  require_file(archive, "patch archive");
  if (k == 0) throw ValidationError("K must be at least 1");
  if (!report_out.empty()) require_output(report_out, "report");
}

ConfigSnapshot RetrieveCommand::snapshot() const {
  return {{"model", model_dir.string()}, {"patches", archive.string()}, {"k", std::to_string(k)},
          {"out", report_out.string()}};
}

std::vector<metrics::MetricReport> cmd_retrieve(const RetrieveCommand& cmd, std::ostream& out) {
  cmd.validate();
  const auto t0 = Clock::now();
  auto model = load_model(cmd.model_dir);
  const auto patches = load_archive(cmd.archive);
  if (cmd.k >= patches.size()) {
    throw ValidationError("K=" + std::to_string(cmd.k) + " must be below the dataset size " + std::to_string(patches.size()));
  }
  const auto labels = labels_of(patches);
  const auto embeddings = embed_patches(model, patches);
  const auto curve = metrics::topk_curve(embeddings, labels, cmd.k);

  std::vector<metrics::MetricReport> reports;
  std::string text;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    metrics::MetricReport r{"top" + std::to_string(i + 1), curve[i], "K=" + std::to_string(i + 1),
                            {cmd.archive.filename().string(), cmd.model_dir.filename().string()}};
    text += r.to_tsv() + "\n";
    reports.push_back(std::move(r));
  }
  emit(cmd.report_out, text, out);

  RunManifest m;
  m.command = "retrieve";
  m.config = cmd.snapshot();
  m.add_input(cmd.archive);
  m.add_input(ModelFiles{cmd.model_dir}.params());
  m.timings_s.emplace_back("retrieve", seconds_since(t0));
  if (!cmd.report_out.empty()) m.outputs.push_back(cmd.report_out.string());
  finish_manifest(m, !cmd.manifest.empty()       ? cmd.manifest
                     : !cmd.report_out.empty() ? with_suffix(cmd.report_out, ".manifest.json")
                                               : fs::path{});
  return reports;
}

// ---- probe ----

void ProbeCommand::validate() const {
  if (model_dir.empty()) throw ValidationError("model directory is required");
  require_file(archive, "patch archive");
  probe.validate();
  if (!report_out.empty()) require_output(report_out, "report");
}

ConfigSnapshot ProbeCommand::snapshot() const {
  return {{"model", model_dir.string()},
          {"patches", archive.string()},
          {"train_fraction", num(probe.train_fraction)},
          {"steps", std::to_string(probe.steps)},
          {"lr", num(probe.learning_rate)},
          {"seed", std::to_string(probe.seed)},
          {"shuffle_labels", probe.shuffle_labels ? "true" : "false"},
          {"out", report_out.string()}};
}

std::string format_probe_report(const ProbeResult& r) {
  auto line = [](const std::string& metric, double v, const std::string& params) {
    return metrics::MetricReport{metric, v, params, {}}.to_tsv() + "\n";
  };
  const std::string split = "train=" + std::to_string(r.train_count) + ",test=" + std::to_string(r.test_count);
  std::string text = line("OA", r.scores.overall_accuracy, split) + line("AA", r.scores.average_accuracy, split) +
                     line("Kappa", r.scores.kappa, split);
  for (std::size_t i = 0; i < r.class_ids.size(); ++i) {
    text += "confusion\t" + std::to_string(r.class_ids[i]);
    for (std::size_t j = 0; j < r.class_ids.size(); ++j) text += "\t" + std::to_string(r.confusion.at(i, j));
    text += "\n";
  }
  for (auto c : r.missing_from_training) text += "warning\tclass " + std::to_string(c) + " absent from training split\n";
  for (auto c : r.scores.unsupported_classes) {
    text += "warning\tclass " + std::to_string(r.class_ids[c]) + " absent from test split\n";
  }
  return text;
}

ProbeResult cmd_probe(const ProbeCommand& cmd, std::ostream& out, std::ostream& warn) {
  cmd.validate();
  const auto t0 = Clock::now();
  auto model = load_model(cmd.model_dir);
  const auto patches = load_archive(cmd.archive);
  const auto labels = labels_of(patches);
  const auto embeddings = embed_patches(model, patches);
  auto result = linear_probe(embeddings, labels, cmd.probe);
  for (auto c : result.missing_from_training) warn << "warning: class " << c << " absent from training split\n";
  emit(cmd.report_out, format_probe_report(result), out);

  RunManifest m;
  m.command = "probe";
  m.config = cmd.snapshot();
  m.add_input(cmd.archive);
  m.add_input(ModelFiles{cmd.model_dir}.params());
  m.timings_s.emplace_back("probe", seconds_since(t0));
  if (!cmd.report_out.empty()) m.outputs.push_back(cmd.report_out.string());
  finish_manifest(m, !cmd.manifest.empty()       ? cmd.manifest
                     : !cmd.report_out.empty() ? with_suffix(cmd.report_out, ".manifest.json")
                                               : fs::path{});
  return result;
}

// ---- metrics ----

void MetricsCommand::validate() const {
  require_file(reference, "reference cube");
  require_file(estimate, "estimate cube");
  if (ergas_ratio && !(*ergas_ratio > 0.0 && *ergas_ratio <= 1.0)) throw ValidationError("ERGAS ratio must lie in (0, 1]");
  if (!(peak > 0.0) || !std::isfinite(peak)) throw ValidationError("PSNR peak must be positive");
  if (!model_dir.empty() && hspl_patch == 0) throw ValidationError("HSPL patch size must be positive");
  if (!report_out.empty()) require_output(report_out, "report");
}

ConfigSnapshot MetricsCommand::snapshot() const {
  return {{"ref", reference.string()},
          {"est", estimate.string()},
          {"ratio", num(ergas_ratio.value_or(metrics::kDefaultErgasRatio))},
          {"peak", num(peak)},
          {"model", model_dir.string()},
          {"hspl_patch", std::to_string(hspl_patch)},
          {"out", report_out.string()}};
}

std::vector<metrics::MetricReport> cmd_metrics(const MetricsCommand& cmd, std::ostream& out, std::ostream& warn) {
  cmd.validate();
  const auto t0 = Clock::now();
  const auto ref = hsi::load_cube(cmd.reference);
  const auto est = hsi::load_cube(cmd.estimate);
  if (ref.height != est.height || ref.width != est.width || ref.bands != est.bands) {
    throw ValidationError("reference and estimate cubes differ in shape");
  }
  const double ratio = cmd.ergas_ratio.value_or(metrics::kDefaultErgasRatio);
  if (!cmd.ergas_ratio) warn << "warning: no ERGAS ratio given; using " << metrics::kDefaultErgasRatio << "\n";

  const std::vector<std::string> ids{cmd.reference.filename().string(), cmd.estimate.filename().string()};
  const auto cc = metrics::cc(ref, est);
  for (auto b : cc.constant_estimate_bands) warn << "warning: estimate band " << b << " is constant; CC counts it as 0\n";
  std::vector<metrics::MetricReport> reports{
      {"CC", cc.value, "bands=" + std::to_string(ref.bands), ids},
      {"SAM", metrics::sam(ref, est), "unit=deg", ids},
      {"RMSE", metrics::rmse(ref, est), "", ids},
      {"ERGAS", metrics::ergas(ref, est, ratio), "ratio=" + num(ratio), ids},
      {"PSNR", metrics::psnr(ref, est, cmd.peak), "peak=" + num(cmd.peak), ids},
  };

  if (!cmd.model_dir.empty()) {
    auto model = load_model(cmd.model_dir);
    const hsi::PatchGridSpec grid{cmd.hspl_patch, 0.0};
    const auto rp = hsi::extract_patches(ref, grid);
    const auto ep = hsi::extract_patches(est, grid);
    if (rp.empty()) throw ValidationError("cubes are smaller than the HSPL patch size");
    double total = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
      const auto r = contrastive::to_tensor(hsi::select_bands(rp[i], model.bands).data);
      const auto e = contrastive::to_tensor(hsi::select_bands(ep[i], model.bands).data);
      total += metrics::hspl_value(e, r, model.config, model.params);
    }
    reports.push_back({"HSPL", total / static_cast<double>(rp.size()),
                       "patch=" + std::to_string(cmd.hspl_patch) + ",tiles=" + std::to_string(rp.size()), ids});
  }

  std::string text;
  for (const auto& r : reports) text += r.to_tsv() + "\n";
  if (cmd.report_out.empty()) {
    out << text;
  } else {
    std::ofstream file(cmd.report_out, std::ios::app);
    if (!(file << text)) throw RuntimeError("cannot append to " + cmd.report_out.string());
  }

  RunManifest m;
  m.command = "metrics";
  m.config = cmd.snapshot();
  m.add_input(cmd.reference);
  m.add_input(cmd.estimate);
  if (!cmd.model_dir.empty()) m.add_input(ModelFiles{cmd.model_dir}.params());
  m.timings_s.emplace_back("metrics", seconds_since(t0));
  if (!cmd.report_out.empty()) m.outputs.push_back(cmd.report_out.string());
  finish_manifest(m, !cmd.manifest.empty()       ? cmd.manifest
                     : !cmd.report_out.empty() ? with_suffix(cmd.report_out, ".manifest.json")
                                               : fs::path{});
  return reports;
}

}  // namespace hscl::pipelines
