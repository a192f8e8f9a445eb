#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hscl/contrastive/augment.hpp"
#include "hscl/contrastive/pretrain.hpp"
#include "hscl/hsi/band_selection.hpp"
#include "hscl/hsi/patches.hpp"
#include "hscl/hsi/synth.hpp"
#include "hscl/metrics/report.hpp"
#include "hscl/metrics/retrieval.hpp"
#include "hscl/nn/backbone.hpp"
#include "hscl/pipelines/manifest.hpp"
#include "hscl/pipelines/probe.hpp"

namespace hscl::pipelines {

namespace fs = std::filesystem;
using ConfigSnapshot = std::vector<std::pair<std::string, std::string>>;

// Band-selection request as given on the command line: "full",
// "manual:0,2,5" or "pca:16". PCA is fitted on the training archive.
struct BandRequest {
  enum class Mode { kFull, kManual, kPca } mode = Mode::kFull;
  std::vector<std::size_t> indices;
  std::size_t components = 0;

  static BandRequest parse(const std::string& text);
  std::string to_string() const;
};

// Persisted selector (bands.json in a model directory).
void save_band_selector(const hsi::BandSelector& selector, std::size_t input_bands, const fs::path& path);
hsi::BandSelector load_band_selector(const fs::path& path);

struct SynthCommand {
  hsi::SynthSpec spec;
  std::uint64_t seed = 7;
  fs::path cube_out;
  fs::path labels_out;
  fs::path manifest;  // empty: <cube_out>.manifest.json

  void validate() const;
  ConfigSnapshot snapshot() const;
};
RunManifest cmd_synth(const SynthCommand& cmd);

struct ExtractCommand {
  fs::path cube;
  fs::path labels;  // optional
  fs::path archive_out;
  hsi::PatchGridSpec grid{32, 0.05};
  std::string cube_id;  // empty: the cube file name
  fs::path manifest;    // empty: <archive_out>.manifest.json

  void validate() const;
  ConfigSnapshot snapshot() const;
};
RunManifest cmd_extract(const ExtractCommand& cmd);

// Model directory layout written by cmd_pretrain.
struct ModelFiles {
  fs::path dir;
  fs::path config() const { return dir / "config.txt"; }
  fs::path params() const { return dir / "params.hkw"; }
  fs::path bands() const { return dir / "bands.json"; }
  fs::path loss_log() const { return dir / "loss.tsv"; }
  fs::path manifest() const { return dir / "manifest.json"; }
};

struct PretrainCommand {
  fs::path archive;
  fs::path out_dir;
  nn::BackboneConfig backbone;  // input_bands follows the band selection
  contrastive::AugmentationSpec augmentation = contrastive::AugmentationSpec::standard();
  contrastive::PretrainOptions training;
  BandRequest bands;
  std::uint64_t init_seed = 1;

  void validate() const;
  ConfigSnapshot snapshot() const;
};
RunManifest cmd_pretrain(const PretrainCommand& cmd);

struct Model {
  nn::BackboneConfig config;
  nn::ParameterSet params;
  hsi::BandSelector bands;
};
Model load_model(const fs::path& dir);
// Frozen backbone embeddings of the band-selected patches.
std::vector<metrics::Embedding> embed_patches(Model& model, const std::vector<hsi::Patch>& patches);

struct RetrieveCommand {
  fs::path model_dir;
  fs::path archive;
  std::size_t k = 5;
  fs::path report_out;  // empty: standard output
  fs::path manifest;    // empty: <report_out>.manifest.json, or none

  void validate() const;
  ConfigSnapshot snapshot() const;
};
// Top-1 .. Top-K reports.
std::vector<metrics::MetricReport> cmd_retrieve(const RetrieveCommand& cmd, std::ostream& out);

struct ProbeCommand {
  fs::path model_dir;
  fs::path archive;
  ProbeOptions probe;
  fs::path report_out;
  fs::path manifest;

  void validate() const;
  ConfigSnapshot snapshot() const;
};
ProbeResult cmd_probe(const ProbeCommand& cmd, std::ostream& out, std::ostream& warn);
// OA/AA/Kappa lines, one confusion row per reference class, warnings.
std::string format_probe_report(const ProbeResult& result);

struct MetricsCommand {
  fs::path reference;
  fs::path estimate;
  std::optional<double> ergas_ratio;  // defaults to 0.25 with a warning
  double peak = 1.0;
  fs::path model_dir;  // optional: adds HSPL
  std::size_t hspl_patch = 32;
  fs::path report_out;  // appended to; empty: standard output
  fs::path manifest;

  void validate() const;
  ConfigSnapshot snapshot() const;
};
std::vector<metrics::MetricReport> cmd_metrics(const MetricsCommand& cmd, std::ostream& out, std::ostream& warn);

}  // namespace hscl::pipelines
