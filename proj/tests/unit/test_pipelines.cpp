#include "doctest.h"

#include <cstdlib>
#include <cstring>
#include <sys/wait.h>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hscl/error.hpp"
#include "hscl/hsi/io.hpp"
#include "hscl/metrics/reconstruction.hpp"
#include "hscl/nn/checkpoint.hpp"
#include "hscl/pipelines/archive.hpp"
#include "hscl/pipelines/commands.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace hscl;
using namespace hscl::pipelines;
using test_support::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<hsi::Patch> some_patches(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<hsi::Patch> out;
  for (std::size_t i = 0; i < n; ++i) {
    hsi::Patch p;
    p.data = hsi::HyperCube(4, 4, 3);
    for (auto& v : p.data.data) v = u(rng);
    p.data.wavelengths_nm = hsi::linear_wavelengths(3);
    p.source_row = i * 4;
    p.source_col = i;
    p.source_cube_id = "cube-" + std::to_string(i % 2);
    p.label = static_cast<std::uint16_t>(i % 3 + 1);
    out.push_back(p);
  }
  return out;
}

std::string archive_bytes(const std::vector<hsi::Patch>& patches) {
  std::ostringstream out;
  write_archive(patches, out);
  return out.str();
}

void expect_corrupt(const std::string& bytes) {
  std::istringstream in(bytes);
  CHECK_THROWS_AS(read_archive(in), RuntimeError);
}

// Small scene + archive used by the command tests.
struct Workspace {
  TempDir dir{"pipe"};
  fs::path cube = dir / "scene.hkc", labels = dir / "scene.hkl", archive = dir / "patches.hka";

  Workspace() {
    SynthCommand s;
    s.spec.height = s.spec.width = 64;
    s.spec.bands = 8;
    s.spec.region_size = 16;
    s.spec.classes = 4;
    s.cube_out = cube;
    s.labels_out = labels;
    cmd_synth(s);
    ExtractCommand e;
    e.cube = cube;
    e.labels = labels;
    e.archive_out = archive;
    e.grid = {16, 0.0};
    cmd_extract(e);
  }

  PretrainCommand pretrain(const std::string& out) const {
    PretrainCommand p;
    p.archive = archive;
    p.out_dir = dir / out;
    p.backbone.input_bands = 8;
    p.backbone.stage_channels = {8, 16};
    p.backbone.stage_pool = {1, 2};
    p.backbone.stem_channels = 8;
    p.backbone.input_pool = 2;
    p.backbone.embedding_dim = 16;
    p.backbone.projection_dim = 8;
    p.training.epochs = 2;
    p.training.batch = 8;
    p.training.checkpoint_every = 1;
    return p;
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HSCL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipelines") {
  TEST_CASE("patch archive round trip") {
    const auto patches = some_patches(5, 1);
    const auto bytes = archive_bytes(patches);
    std::istringstream in(bytes);
    CHECK(read_archive(in) == patches);
    CHECK(bytes.substr(0, 4) == "HKC1");
    CHECK(bytes.substr(bytes.size() - 4) == "HKPE");
    // An empty archive is just the index and trailer.
    CHECK(archive_bytes({}).size() == 4 + 4 + 8 + 4);

    TempDir dir("archive");
    save_archive(patches, dir / "a.hka");
    CHECK(load_archive(dir / "a.hka") == patches);
    CHECK(slurp(dir / "a.hka") == bytes);
  }

  TEST_CASE("corrupt archives are rejected") {
    const auto bytes = archive_bytes(some_patches(3, 2));
    expect_corrupt(bytes.substr(0, bytes.size() - 1));
    expect_corrupt(bytes.substr(0, bytes.size() - 20));
    expect_corrupt(bytes.substr(0, 10));
    expect_corrupt("");
    auto bad_trailer = bytes;
    bad_trailer[bad_trailer.size() - 1] = 'X';
    expect_corrupt(bad_trailer);
    auto bad_record = bytes;
    bad_record[0] = 'X';
    expect_corrupt(bad_record);
    auto bad_offset = bytes;
    bad_offset[bad_offset.size() - 12] ^= 0x01;
    expect_corrupt(bad_offset);
    auto extra = bytes;
    extra.insert(extra.size() - 12, "junk");
    expect_corrupt(extra);
  }

  TEST_CASE("manifest digests and JSON") {
    TempDir dir("manifest");
    std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
    CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    RunManifest m;
    m.command = "synth";
    m.config = {{"seed", "7"}, {"bands", "32"}};
    m.add_input(dir / "abc.txt");
    m.outputs = {"x.hkc"};
    m.timings_s = {{"generate", 0.5}};
    m.save(dir / "m.json");
    const auto j = nlohmann::json::parse(slurp(dir / "m.json"));
    CHECK(j["version"] == kToolkitVersion);
    CHECK(j["command"] == "synth");
    CHECK(j["config"]["seed"] == "7");
    CHECK(j["inputs"][0]["bytes"] == 3);
    CHECK(j["inputs"][0]["sha256"] == sha256_file(dir / "abc.txt"));
    CHECK(j["outputs"][0] == "x.hkc");
    // Any byte change shows up in the digest.
    std::ofstream(dir / "abc.txt", std::ios::binary) << "abd";
    CHECK(sha256_file(dir / "abc.txt") != j["inputs"][0]["sha256"]);
  }

  TEST_CASE("band requests") {
    CHECK(BandRequest::parse("full").mode == BandRequest::Mode::kFull);
    const auto m = BandRequest::parse("manual:0,2,5");
    CHECK(m.indices == std::vector<std::size_t>{0, 2, 5});
    CHECK(m.to_string() == "manual:0,2,5");
    CHECK(BandRequest::parse("pca:16").components == 16);
    CHECK(BandRequest::parse("pca:16").to_string() == "pca:16");
    for (const char* bad : {"", "pca", "pca:", "pca:0", "pca:-3", "manual:", "manual:1,x", "lda:4"}) {
      CHECK_THROWS_AS(BandRequest::parse(bad), ValidationError);
    }
  }

  TEST_CASE("band selector persistence") {
    TempDir dir("bands");
    const auto patches = some_patches(4, 3);
    const auto pca = hsi::BandSelector::pca(hsi::fit_pca(patches, {2}));
    save_band_selector(pca, 3, dir / "p.json");
    const auto back = load_band_selector(dir / "p.json");
    CHECK(hsi::select_bands(patches[1], back) == hsi::select_bands(patches[1], pca));
    save_band_selector(hsi::BandSelector::manual({0, 2}, 3), 3, dir / "m.json");
    CHECK(hsi::select_bands(patches[0], load_band_selector(dir / "m.json")).bands() == 2);
    std::ofstream(dir / "bad.json") << "{\"mode\": \"pca\"}";
    CHECK_THROWS_AS(load_band_selector(dir / "bad.json"), RuntimeError);
  }

  TEST_CASE("linear probe: separable features and the shuffled control") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.1);
    std::vector<metrics::Embedding> f;
    std::vector<std::uint16_t> labels;
    for (std::size_t i = 0; i < 160; ++i) {
      const auto cls = static_cast<std::uint16_t>(i % 8 + 1);
      metrics::Embedding e(8);
      for (auto& v : e) v = g(rng);
      e[cls - 1] += 2.0;
      f.push_back(e);
      labels.push_back(cls);
    }
    const auto r = linear_probe(f, labels, {});
    CHECK(r.scores.overall_accuracy == 1.0);
    CHECK(r.train_count == 80);
    CHECK(r.test_count == 80);
    CHECK(r.class_ids.size() == 8);
    ProbeOptions shuffled;
    shuffled.shuffle_labels = true;
    CHECK(linear_probe(f, labels, shuffled).scores.overall_accuracy < 2.0 / 8.0);
    const auto report = format_probe_report(r);
    CHECK(report.find("OA\t1\t") == 0);
    CHECK(report.find("\nAA\t") != std::string::npos);
    CHECK(report.find("\nKappa\t") != std::string::npos);

    // A singleton class cannot appear in both splits.
    f.push_back(f[0]);
    labels.push_back(42);
    const auto flagged = linear_probe(f, labels, {});
    CHECK(flagged.missing_from_training == std::vector<std::uint16_t>{42});
    CHECK(format_probe_report(flagged).find("warning\tclass 42") != std::string::npos);
  }

  TEST_CASE("synth: determinism, header, validation leaves nothing behind") {
    TempDir dir("synth");
    SynthCommand s;
    s.spec.height = s.spec.width = 32;
    s.spec.bands = 8;
    s.spec.region_size = 8;
    s.cube_out = dir / "a.hkc";
    s.labels_out = dir / "a.hkl";
    cmd_synth(s);
    s.cube_out = dir / "b.hkc";
    s.labels_out = dir / "b.hkl";
    cmd_synth(s);
    CHECK(slurp(dir / "a.hkc") == slurp(dir / "b.hkc"));
    CHECK(slurp(dir / "a.hkl") == slurp(dir / "b.hkl"));
    CHECK(fs::exists(dir / "a.hkc.manifest.json"));

    SynthCommand big;
    big.spec.height = big.spec.width = 320;
    big.spec.bands = 224;
    big.cube_out = dir / "big.hkc";
    big.labels_out = dir / "big.hkl";
    cmd_synth(big);
    const auto head = slurp(dir / "big.hkc").substr(0, 16);
    std::uint32_t dims[3];
    std::memcpy(dims, head.data() + 4, 12);
    CHECK(dims[0] == 320);
    CHECK(dims[1] == 320);
    CHECK(dims[2] == 224);

    SynthCommand one = s;
    one.spec.classes = 1;
    one.cube_out = dir / "c.hkc";
    one.labels_out = dir / "c.hkl";
    CHECK_THROWS_AS(cmd_synth(one), ValidationError);
    CHECK_FALSE(fs::exists(dir / "c.hkc"));
    CHECK_FALSE(fs::exists(dir / "c.hkl"));
  }

  TEST_CASE("extract: single patch, cube too small, bad overlap") {
    TempDir dir("extract");
    hsi::HyperCube cube(160, 160, 2);
    cube.wavelengths_nm = hsi::linear_wavelengths(2);
    hsi::save_cube(cube, dir / "c.hkc");
    ExtractCommand e;
    e.cube = dir / "c.hkc";
    e.archive_out = dir / "p.hka";
    e.grid = {160, 0.05};
    cmd_extract(e);
    const auto patches = load_archive(dir / "p.hka");
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].source_cube_id == "c.hkc");
    e.grid = {200, 0.05};
    e.archive_out = dir / "q.hka";
    CHECK_THROWS_AS(cmd_extract(e), ValidationError);
    CHECK_FALSE(fs::exists(dir / "q.hka"));
    e.grid = {50, 0.99};
    CHECK_THROWS_AS(cmd_extract(e), ValidationError);
    e.cube = dir / "missing.hkc";
    e.grid = {16, 0.0};
    CHECK_THROWS_AS(cmd_extract(e), ValidationError);
  }

  TEST_CASE("pretrain, retrieve, probe and metrics commands") {
    Workspace ws;
    auto zero = ws.pretrain("zero");
    zero.training.epochs = 0;
    cmd_pretrain(zero);
    auto fresh = nn::init_parameters(nn::load_config(ModelFiles{zero.out_dir}.config()), zero.init_seed);
    auto loaded = load_model(zero.out_dir);
    // Only the fitted input statistics differ from a fresh init.
    for (const auto& [name, t] : fresh) {
      if (name == nn::kInputShift || name == nn::kInputScale) continue;
      CHECK(loaded.params.at(name) == t);
    }

    const auto a = ws.pretrain("a"), b = ws.pretrain("b");
    cmd_pretrain(a);
    cmd_pretrain(b);
    for (const char* f : {"loss.tsv", "params.hkw", "config.txt", "bands.json", "params_epoch0001.hkw"}) {
      INFO(f);
      CHECK(slurp(a.out_dir / f) == slurp(b.out_dir / f));
    }
    const auto log = slurp(a.out_dir / "loss.tsv");
    CHECK(log.rfind("epoch\tloss\t", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 3);
    const auto manifest = nlohmann::json::parse(slurp(a.out_dir / "manifest.json"));
    CHECK(manifest["config"]["batch"] == "8");
    CHECK(manifest["inputs"][0]["sha256"] == sha256_file(ws.archive));

    auto too_big = ws.pretrain("big");
    too_big.training.batch = 100;
    CHECK_THROWS_AS(cmd_pretrain(too_big), ValidationError);
    CHECK_FALSE(fs::exists(too_big.out_dir));

    auto pca = ws.pretrain("pca");
    pca.bands = BandRequest::parse("pca:4");
    cmd_pretrain(pca);
    CHECK(load_model(pca.out_dir).config.input_bands == 4);

    RetrieveCommand r;
    r.model_dir = a.out_dir;
    r.archive = ws.archive;
    r.k = 3;
    std::ostringstream out;
    const auto reports = cmd_retrieve(r, out);
    REQUIRE(reports.size() == 3);
    CHECK(out.str().rfind("top1\t", 0) == 0);
    CHECK(reports[2].value >= reports[0].value);
    r.model_dir = pca.out_dir;
    std::ostringstream pca_out;
    CHECK(cmd_retrieve(r, pca_out).size() == 3);
    r.k = 16;
    CHECK_THROWS_AS(cmd_retrieve(r, out), ValidationError);

    // A checkpoint that does not fit its config is refused.
    fs::copy_file(ws.dir / "zero" / "params.hkw", ws.dir / "pca" / "params.hkw", fs::copy_options::overwrite_existing);
    r.k = 1;
    CHECK_THROWS_AS(cmd_retrieve(r, out), ValidationError);

    ProbeCommand p;
    p.model_dir = a.out_dir;
    p.archive = ws.archive;
    p.report_out = ws.dir / "probe.tsv";
    std::ostringstream pout, warn;
    cmd_probe(p, pout, warn);
    CHECK(slurp(p.report_out).rfind("OA\t", 0) == 0);

    MetricsCommand m;
    m.reference = ws.cube;
    m.estimate = ws.cube;
    m.model_dir = a.out_dir;
    m.hspl_patch = 16;
    std::ostringstream mout, mwarn;
    const auto metrics = cmd_metrics(m, mout, mwarn);
    REQUIRE(metrics.size() == 6);
    CHECK(metrics[0].metric == "CC");
    CHECK(metrics[0].value == doctest::Approx(1.0));
    CHECK(metrics[1].value == 0.0);
    CHECK(metrics[2].value == 0.0);
    CHECK(metrics[3].value == 0.0);
    CHECK(std::isinf(metrics[4].value));
    CHECK(metrics[5].metric == "HSPL");
    CHECK(metrics[5].value == 0.0);
    CHECK(mwarn.str().find("0.25") != std::string::npos);
    CHECK(mout.str().find("PSNR\tinf") != std::string::npos);

    // Reports append.
    m.model_dir.clear();
    m.ergas_ratio = 0.5;
    m.report_out = ws.dir / "metrics.tsv";
    std::ostringstream quiet;
    cmd_metrics(m, quiet, quiet);
    cmd_metrics(m, quiet, quiet);
    const auto text = slurp(m.report_out);
    CHECK(std::count(text.begin(), text.end(), '\n') == 10);
    CHECK(quiet.str().empty());

    hsi::HyperCube other(32, 32, 8);
    other.wavelengths_nm = hsi::linear_wavelengths(8);
    hsi::save_cube(other, ws.dir / "other.hkc");
    m.estimate = ws.dir / "other.hkc";
    CHECK_THROWS_AS(cmd_metrics(m, quiet, quiet), ValidationError);
  }

  TEST_CASE("metrics on a noisy estimate match direct computation") {
    Workspace ws;
    auto ref = hsi::load_cube(ws.cube);
    auto est = ref;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0, 0.02);
    for (auto& v : est.data) v = static_cast<float>(std::clamp(v + g(rng), 0.0, 1.0));
    hsi::save_cube(est, ws.dir / "est.hkc");
    MetricsCommand m;
    m.reference = ws.cube;
    m.estimate = ws.dir / "est.hkc";
    m.ergas_ratio = 0.25;
    std::ostringstream out, warn;
    const auto r = cmd_metrics(m, out, warn);
    CHECK(r[0].value == metrics::cc(ref, est).value);
    CHECK(r[1].value == metrics::sam(ref, est));
    CHECK(r[2].value == metrics::rmse(ref, est));
    CHECK(r[3].value == metrics::ergas(ref, est, 0.25));
    CHECK(r[4].value == metrics::psnr(ref, est));
    CHECK(warn.str().empty());
  }

  TEST_CASE("command line: exit codes and config files") {
    TempDir dir("cli");
    const auto d = dir.path().string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("synth --out " + d + "/c.hkc --labels " + d + "/c.hkl --height 32 --width 32 --bands 8 --region-size 8") == 0);
    CHECK(run_cli("synth --out " + d + "/x.hkc --labels " + d + "/x.hkl --classes 1") == 2);
    CHECK(run_cli("synth --out " + d + "/x.hkc --labels " + d + "/x.hkl --classes many") == 2);
    CHECK(run_cli("synth --out " + d + "/x.hkc --labels " + d + "/x.hkl --no-such-flag 1") == 2);
    CHECK(run_cli("metrics --ref " + d + "/c.hkc --est " + d + "/missing.hkc") == 2);

    // Runtime failure: a file that exists but is not a cube.
    std::ofstream(dir / "junk.hkc") << "not a cube";
    CHECK(run_cli("metrics --ref " + d + "/c.hkc --est " + d + "/junk.hkc") == 1);

    // File values apply, flags win.
    std::ofstream(dir / "run.cfg") << "# scene\nheight = 48\nwidth=48\nbands=6\nregion-size=8\n";
    CHECK(run_cli("synth --config " + d + "/run.cfg --width 40 --out " + d + "/f.hkc --labels " + d + "/f.hkl") == 0);
    const auto cube = hsi::load_cube(dir / "f.hkc");
    CHECK(cube.height == 48);
    CHECK(cube.width == 40);
    CHECK(cube.bands == 6);
    std::ofstream(dir / "bad.cfg") << "height\n";
    CHECK(run_cli("synth --config " + d + "/bad.cfg --out " + d + "/g.hkc --labels " + d + "/g.hkl") == 2);
    std::ofstream(dir / "unknown.cfg") << "mystery=3\n";
    CHECK(run_cli("synth --config " + d + "/unknown.cfg --out " + d + "/g.hkc --labels " + d + "/g.hkl") == 2);
    CHECK_FALSE(fs::exists(dir / "g.hkc"));
  }
}
