// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hscl/contrastive/augment.hpp"
#include "hscl/contrastive/nt_xent.hpp"
#include "hscl/contrastive/pretrain.hpp"
#include "hscl/hsi/band_selection.hpp"
#include "hscl/hsi/io.hpp"
#include "hscl/hsi/patches.hpp"
#include "hscl/hsi/synth.hpp"
#include "hscl/metrics/classification.hpp"
#include "hscl/metrics/hspl.hpp"
#include "hscl/metrics/reconstruction.hpp"
#include "hscl/metrics/retrieval.hpp"
#include "hscl/nn/backbone.hpp"
#include "hscl/nn/gradcheck.hpp"
#include "hscl/nn/layers.hpp"
#include "hscl/pipelines/commands.hpp"
#include "oracles.hpp"

using namespace hscl;
namespace fs = std::filesystem;
using T64 = nn::BasicTensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

// Collects named checks and their failures for the report line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok) failure_ += (failure_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& text) { notes_ += (notes_.empty() ? "" : ", ") + text; }
  bool passed() const { return failure_.empty(); }
  std::string detail() const {
    std::string d = std::to_string(count_) + " checks";
    if (!notes_.empty()) d += "; " + notes_;
    if (!failure_.empty()) d += "; failed: " + failure_;
    return d;
  }

 private:
  std::size_t count_ = 0;
  std::string notes_, failure_;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

T64 random_tensor(nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  T64 t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

nn::Var<double> mse_to(nn::Tape<double>& t, nn::Var<double> y, const T64& target) {
  return nn::mean_squared_error(y, t.leaf(target, false));
}

double max_abs_diff(const T64& a, const T64& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

contrastive::Embedding unit_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  contrastive::Embedding e(dim);
  double n = 0;
  for (double& x : e) {
    x = g(rng);
    n += x * x;
  }
  for (double& x : e) x /= std::sqrt(n);
  return e;
}

contrastive::ContrastiveBatch random_batch(std::size_t pairs, std::size_t dim, std::mt19937_64& rng) {
  contrastive::ContrastiveBatch b;
  for (std::size_t i = 0; i < 2 * pairs; ++i) b.embeddings.push_back(unit_vector(dim, rng));
  b.partner = contrastive::ContrastiveBatch::split_pairing(pairs);
  return b;
}

hsi::HyperCube random_cube(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed, float lo = 0.05f) {
  hsi::HyperCube cube(h, w, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, 1.0f);
  for (auto& v : cube.data) v = u(rng);
  cube.wavelengths_nm = hsi::linear_wavelengths(c);
  return cube;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

void criterion_gradients(Checks& c) {
  double worst = 0;
  auto run = [&](const std::string& name, std::uint64_t seed, nn::DoubleParameterSet& ps, const nn::LossBuilder& f) {
    nn::GradCheckOptions opt;
    opt.seed = seed;
    const auto r = nn::gradient_check(f, ps, opt);
    worst = std::max(worst, r.max_rel_error);
    c.expect(r.max_rel_error < 1e-3, name + " probe " + std::to_string(seed) + " rel " + sci(r.max_rel_error));
  };

  for (std::uint64_t probe = 0; probe < 5; ++probe) {
    std::mt19937_64 rng(1000 + probe);
    {
      nn::DoubleParameterSet ps;
      ps.add("x", random_tensor({3, 5, 5}, rng));
      ps.add("k", random_tensor({4, 3, 3, 3}, rng));
      ps.add("b", random_tensor({4}, rng));
      const auto target = random_tensor({4, 5, 5}, rng);
      run("conv2d", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        return mse_to(t, nn::conv2d(t.parameter(p, "x"), t.parameter(p, "k"), t.parameter(p, "b"), {1, 1, 1}), target);
      });
    }
    {
      nn::DoubleParameterSet ps;
      ps.add("x", random_tensor({4, 6, 6}, rng));
      ps.add("k", random_tensor({6, 2, 3, 3}, rng));
      ps.add("b", random_tensor({6}, rng));
      const auto target = random_tensor({6, 6, 6}, rng);
      run("grouped conv", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        return mse_to(t, nn::conv2d(t.parameter(p, "x"), t.parameter(p, "k"), t.parameter(p, "b"), {2, 1, 1}), target);
      });
    }
    {
      nn::DoubleParameterSet ps;
      ps.add("x", random_tensor({3, 5, 5}, rng));
      ps.add("depth", random_tensor({3, 1, 3, 3}, rng));
      ps.add("point", random_tensor({4, 3, 1, 1}, rng));
      const auto target = random_tensor({4, 5, 5}, rng);
      run("dsc", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        return mse_to(
            t, nn::depthwise_separable_conv(t.parameter(p, "x"), t.parameter(p, "depth"), t.parameter(p, "point")),
            target);
      });
    }
    {
      nn::DoubleParameterSet ps;
      ps.add("x", random_tensor({1, 5, 4, 4}, rng));
      ps.add("k", random_tensor({2, 1, 3, 3, 3}, rng));
      ps.add("b", random_tensor({2}, rng));
      const auto target = random_tensor({2, 5, 4, 4}, rng);
      run("conv3d", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        return mse_to(t, nn::conv3d(t.parameter(p, "x"), t.parameter(p, "k"), t.parameter(p, "b"), {1, 1, 1, 1}),
                      target);
      });
    }
    {
      nn::DoubleParameterSet ps;
      ps.add("x", random_tensor({4, 3, 3}, rng));
      ps.add("beta", random_tensor({4}, rng, -2, 2));
      ps.add("gamma", random_tensor({4}, rng));
      const auto target = random_tensor({4, 3, 3}, rng);
      run("se gate", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        return mse_to(t, nn::se_block(t.parameter(p, "x"), t.parameter(p, "beta"), t.parameter(p, "gamma")), target);
      });
    }
    {
      nn::DoubleParameterSet ps;
      ps.add("x", random_tensor({4, 4, 4}, rng));
      ps.add("fc1.w", random_tensor({2, 4}, rng));
      ps.add("fc1.b", random_tensor({2}, rng));
      ps.add("fc2.w", random_tensor({4, 2}, rng));
      ps.add("fc2.b", random_tensor({4}, rng));
      ps.add("sp.w", random_tensor({1, 2, 3, 3}, rng));
      ps.add("sp.b", random_tensor({1}, rng));
      const auto target = random_tensor({4, 4, 4}, rng);
      run("cbam", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        nn::CbamParams<double> cp{t.parameter(p, "fc1.w"), t.parameter(p, "fc1.b"), t.parameter(p, "fc2.w"),
                                  t.parameter(p, "fc2.b"), t.parameter(p, "sp.w"),  t.parameter(p, "sp.b")};
        return mse_to(t, nn::cbam_block(t.parameter(p, "x"), cp), target);
      });
    }
    {
      nn::DoubleParameterSet ps;
      ps.add("f", random_tensor({6}, rng));
      ps.add("w1", random_tensor({4, 6}, rng));
      ps.add("b1", random_tensor({4}, rng));
      ps.add("w2", random_tensor({4, 4}, rng));
      ps.add("b2", random_tensor({4}, rng));
      const auto target = random_tensor({4}, rng);
      run("projection head", probe, ps, [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
        nn::ProjectionHeadParams<double> hp{t.parameter(p, "w1"), t.parameter(p, "b1"), t.parameter(p, "w2"),
                                            t.parameter(p, "b2")};
        return mse_to(t, nn::projection_head(t.parameter(p, "f"), hp), target);
      });
    }
    {
      // NT-Xent returns its own gradient; compare it with central differences.
      const auto batch = random_batch(4, 6, rng);
      contrastive::NtXentOptions opt;
      opt.unit_tolerance = 1e-2;
      const auto analytic = contrastive::nt_xent_loss(batch, opt).grad;
      double scale = 0;
      for (const auto& g : analytic)
        for (double v : g) scale = std::max(scale, std::abs(v));
      const double h = 1e-5;
      double rel = 0;
      for (std::size_t i = 0; i < batch.embeddings.size(); ++i)
        for (std::size_t d = 0; d < batch.embeddings[i].size(); ++d) {
          auto up = batch, down = batch;
          up.embeddings[i][d] += h;
          down.embeddings[i][d] -= h;
          const double fd = (contrastive::nt_xent_loss(up, opt).loss - contrastive::nt_xent_loss(down, opt).loss) / (2 * h);
          const double a = analytic[i][d];
          rel = std::max(rel, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3 * scale, 1e-8}));
        }
      worst = std::max(worst, rel);
      c.expect(rel < 1e-3, "nt-xent probe " + std::to_string(probe) + " rel " + sci(rel));
    }
  }
  c.note("max rel error " + sci(worst));
}

// ---------------------------------------------------------------------------
// 2. Oracle suite

void criterion_oracles(Checks& c) {
  std::mt19937_64 rng(2024);
  double conv_err = 0;
  struct ConvCase {
    std::size_t cin, cout, groups, k, stride, pad, side;
  };
  for (const ConvCase k : {ConvCase{3, 4, 1, 3, 1, 1, 7}, ConvCase{4, 6, 2, 3, 1, 1, 6}, ConvCase{8, 8, 4, 3, 2, 1, 9},
                           ConvCase{4, 4, 4, 3, 1, 1, 5}, ConvCase{2, 3, 1, 1, 1, 0, 4}, ConvCase{3, 2, 1, 5, 1, 2, 8}}) {
    const auto x = random_tensor({k.cin, k.side, k.side}, rng);
    const auto w = random_tensor({k.cout, k.cin / k.groups, k.k, k.k}, rng);
    const auto b = random_tensor({k.cout}, rng);
    nn::Tape<double> t;
    const auto y = nn::conv2d(t.leaf(x), t.leaf(w), t.leaf(b), {k.groups, k.stride, k.pad}).value();
    const double e = max_abs_diff(y, oracle::conv2d_ref(x, w, &b, k.groups, k.stride, k.pad));
    conv_err = std::max(conv_err, e);
    c.expect(e < 1e-6, "conv2d oracle " + sci(e));
  }
  for (std::size_t pad : {0, 1}) {
    const auto x = random_tensor({1, 7, 5, 5}, rng);
    const auto w = random_tensor({3, 1, 3, 3, 3}, rng);
    const auto b = random_tensor({3}, rng);
    nn::Tape<double> t;
    const auto y = nn::conv3d(t.leaf(x), t.leaf(w), t.leaf(b), {1, 1, pad, pad}).value();
    const double e = max_abs_diff(y, oracle::conv3d_ref(x, w, b, pad, pad));
    conv_err = std::max(conv_err, e);
    c.expect(e < 1e-6, "conv3d oracle " + sci(e));
  }

  double loss_err = 0;
  for (std::size_t n : {1, 2, 4, 8})
    for (double tau : {0.1, 0.5, 1.0})
      for (bool self : {false, true}) {
        const auto batch = random_batch(n, 16, rng);
        const double e =
            std::abs(contrastive::nt_xent_loss(batch, {tau, self}).loss - oracle::naive_nt_xent(batch, tau, self));
        loss_err = std::max(loss_err, e);
        c.expect(e < 1e-6, "nt-xent N=" + std::to_string(n) + " " + sci(e));
      }

  std::size_t hn = 0;
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const auto batch = random_batch(3 + trial % 6, 4, rng);
    for (std::size_t a = 0; a < batch.embeddings.size(); ++a) {
      const auto p = batch.partner[a];
      c.expect(contrastive::hard_negative(a, p, batch.embeddings) == oracle::brute_hard_negative(a, p, batch.embeddings),
               "hard_negative trial " + std::to_string(trial));
      ++hn;
    }
  }

  double metric_err = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ref = random_cube(9, 7, 6, seed);
    auto est = random_cube(9, 7, 6, seed + 100);
    for (std::size_t i = 0; i < est.data.size(); ++i) est.data[i] = 0.8f * ref.data[i] + 0.2f * est.data[i];
    const std::pair<double, double> pairs[] = {
        {metrics::rmse(ref, est), oracle::oracle_rmse(ref, est)},
        {metrics::psnr(ref, est, 1.0), oracle::oracle_psnr(ref, est, 1.0)},
        {metrics::sam(ref, est), oracle::oracle_sam(ref, est)},
        {metrics::cc(ref, est).value, oracle::oracle_cc(ref, est)},
        {metrics::ergas(ref, est, 0.25), oracle::oracle_ergas(ref, est, 0.25)},
    };
    for (const auto& [ours, theirs] : pairs) {
      const double e = std::abs(ours - theirs);
      metric_err = std::max(metric_err, e);
      c.expect(e < 1e-7, "reconstruction metric oracle " + sci(e));
    }
  }
  c.note("conv " + sci(conv_err) + ", nt-xent " + sci(loss_err) + ", metrics " + sci(metric_err) + ", " +
         std::to_string(hn) + " hard negatives");
}

// ---------------------------------------------------------------------------
// 3. Analytic anchors

void criterion_anchors(Checks& c) {
  contrastive::ContrastiveBatch one;
  one.embeddings = {{1, 0}, {0, 1}};
  one.partner = contrastive::ContrastiveBatch::split_pairing(1);
  c.expect(contrastive::nt_xent_loss(one).loss == 0.0, "nt-xent N=1 is not exactly 0");

  // Positives aligned, the two pairs orthogonal, tau 1: each anchor sees e / (e + 2).
  contrastive::ContrastiveBatch two;
  two.embeddings = {{1, 0}, {0, 1}, {1, 0}, {0, 1}};
  two.partner = contrastive::ContrastiveBatch::split_pairing(2);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  const double got = contrastive::nt_xent_loss(two, {1.0}).loss;
  c.expect(std::abs(got - expected) < 1e-6, "nt-xent N=2 " + fmt(got, 8) + " vs " + fmt(expected, 8));

  std::mt19937_64 rng(3);
  const auto x = random_tensor({5, 3, 3}, rng);
  nn::Tape<double> t;
  const auto y = nn::se_block(t.leaf(x), t.leaf(T64({5}, 0.0)), t.leaf(T64({5}, 0.0))).value();
  bool halves = true;
  for (std::size_t i = 0; i < x.size(); ++i) halves = halves && y[i] == 0.5 * x[i];
  c.expect(halves, "SE gate with beta = gamma = 0 does not halve its input");

  auto cube_of = [](std::vector<float> v) {
    hsi::HyperCube cube(1, 1, v.size());
    cube.data = std::move(v);
    cube.wavelengths_nm = hsi::linear_wavelengths(cube.bands);
    return cube;
  };
  const auto e1 = cube_of({1, 0}), e2 = cube_of({0, 1}), diag = cube_of({1, 1}), twice = cube_of({2, 0});
  c.expect(std::abs(metrics::sam(e1, e2) - 90.0) < 1e-6, "SAM 90");
  c.expect(std::abs(metrics::sam(e1, diag) - 45.0) < 1e-6, "SAM 45");
  c.expect(std::abs(metrics::sam(e1, twice)) < 1e-6, "SAM 0");

  const auto zeros = cube_of({0, 0, 0, 0}), halves4 = cube_of({0.5f, 0.5f, 0.5f, 0.5f});
  const double psnr = metrics::psnr(zeros, halves4, 1.0);
  c.expect(std::abs(psnr - 6.0206) < 1e-4, "PSNR anchor " + fmt(psnr, 6));

  metrics::ConfusionMatrix perfect(3);
  for (std::size_t k = 0; k < 3; ++k) perfect.add(k, k, 10);
  c.expect(metrics::classification_metrics(perfect).kappa == 1.0, "kappa 1");
  metrics::ConfusionMatrix chance(2);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t p = 0; p < 2; ++p) chance.add(r, p, 25);
  c.expect(metrics::classification_metrics(chance).kappa == 0.0, "kappa 0");
  c.note("N=2 loss " + fmt(got, 6) + ", PSNR " + fmt(psnr, 4));
}

// ---------------------------------------------------------------------------
// Toy experiment shared by criteria 4, 5 and 6.

struct ToyData {
  std::vector<hsi::Patch> patches;
  std::vector<nn::Tensor> tensors;
  std::vector<std::uint16_t> labels;
};

const ToyData& toy_data() {
  static const ToyData data = [] {
    hsi::SynthSpec spec;
    spec.height = 704;
    spec.width = 736;
    spec.bands = 32;
    spec.classes = 8;
    spec.region_size = 32;
    spec.class_contrast = 0.2;
    spec.noise_sigma = 0.01;
    spec.paired_materials = true;
    spec.blob_scale = 8;
    spec.continuum_amplitude = 0.1;
    spec.continuum_degree = 5;
    auto scene = hsi::synth_cube(7, spec);
    ToyData d;
    d.patches = hsi::extract_patches(scene.cube, {32, 0.0}, "toy", &scene.labels);
    for (const auto& p : d.patches) {
      d.tensors.push_back(contrastive::to_tensor(p.data));
      d.labels.push_back(p.label);
    }
    return d;
  }();
  return data;
}

struct ToyRun {
  nn::BackboneConfig config;
  nn::ParameterSet initial, trained;
  std::optional<hsi::BandSelector> selector;
  double untrained_top1 = 0, trained_top1 = 0, seconds = 0;

  nn::Tensor view(const nn::Tensor& t) const { return selector ? contrastive::select_bands(t, *selector) : t; }

  std::vector<metrics::Embedding> embeddings(nn::ParameterSet& params) const {
    std::vector<metrics::Embedding> out;
    for (const auto& t : toy_data().tensors) {
      const auto e = nn::embed(view(t), config, params);
      out.emplace_back(e.values().begin(), e.values().end());
    }
    return out;
  }
};

ToyRun toy_run(nn::Variant variant, std::size_t pca_components) {
  const auto& data = toy_data();
  ToyRun run;
  if (pca_components > 0) run.selector = hsi::BandSelector::pca(hsi::fit_pca(data.patches, {pca_components, 0, 0}));
  std::vector<nn::Tensor> views;
  for (const auto& t : data.tensors) views.push_back(run.view(t));

  run.config.variant = variant;
  run.config.input_bands = views.front().extent(0);
  run.config.init_gain = std::sqrt(6.0);
  run.config.zero_bias_init = true;
  run.initial = nn::init_parameters(run.config, 1);
  nn::fit_input_standardization(run.config, views, run.initial);

  contrastive::AugmentationSpec aug;
  aug.ops = {contrastive::HorizontalFlip{0.5}, contrastive::VerticalFlip{0.5}, contrastive::Rotate90{0.5},
             contrastive::CropResize{0.3, 1.0, 1.0}, contrastive::Brightness{0.8, 1.2},
             contrastive::SpectralNoise{0.01}, contrastive::Continuum{0.1, 5}};
  contrastive::PretrainOptions opt;
  opt.epochs = 50;
  opt.batch = 32;
  opt.tau = 0.5;
  opt.learning_rate = 1e-3;
  opt.decay_at = {0.9};
  opt.decay_factor = 0.1;
  opt.seed = 7;
  if (run.selector) opt.view_transform = [&run](const nn::Tensor& t) { return run.view(t); };

  const std::string tag = nn::to_string(variant) + (pca_components ? " pca:" + std::to_string(pca_components) : "");
  std::fprintf(stderr, "  training %s ...\n", tag.c_str());
  const auto t0 = Clock::now();
  run.trained = contrastive::pretrain(data.tensors, run.config, aug, opt, run.initial).params;
  run.seconds = seconds_since(t0);
  run.untrained_top1 = metrics::topk_retrieval(run.embeddings(run.initial), data.labels, 1);
  run.trained_top1 = metrics::topk_retrieval(run.embeddings(run.trained), data.labels, 1);
  std::fprintf(stderr, "  %s: top1 %.3f (untrained %.3f) in %.0f s\n", tag.c_str(), run.trained_top1,
               run.untrained_top1, run.seconds);
  return run;
}

ToyRun& seb_run() {
  static ToyRun run = toy_run(nn::Variant::kSEB, 0);
  return run;
}

void criterion_toy(Checks& c) {
  const auto& run = seb_run();
  const auto& data = toy_data();
  c.expect(data.patches.size() >= 450 && data.patches.size() <= 550, "patch count " + std::to_string(data.patches.size()));
  c.expect(run.trained_top1 >= 0.95, "trained Top-1 " + fmt(run.trained_top1));
  c.expect(run.trained_top1 >= 3.0 * run.untrained_top1, "not 3x the untrained baseline");
  c.expect(run.seconds < 15 * 60, "training took " + fmt(run.seconds, 0) + " s");
  c.note(std::to_string(data.patches.size()) + " patches, Top-1 " + fmt(run.trained_top1) + " vs untrained " +
         fmt(run.untrained_top1) + ", " + fmt(run.seconds, 0) + " s");
}

void criterion_ablation(Checks& c) {
  const double seb = seb_run().trained_top1;
  const double cbam = toy_run(nn::Variant::kCBAM, 0).trained_top1;
  const double conv3d = toy_run(nn::Variant::kConv3D, 0).trained_top1;
  c.expect(seb >= conv3d - 0.02, "raw: SEB " + fmt(seb) + " below Conv3D " + fmt(conv3d));
  c.expect(cbam >= conv3d - 0.02, "raw: CBAM " + fmt(cbam) + " below Conv3D " + fmt(conv3d));

  const std::size_t k = toy_data().tensors.front().extent(0) / 2;
  const double p_seb = toy_run(nn::Variant::kSEB, k).trained_top1;
  const double p_cbam = toy_run(nn::Variant::kCBAM, k).trained_top1;
  const double p_conv3d = toy_run(nn::Variant::kConv3D, k).trained_top1;
  const double best = std::max({p_seb, p_cbam, p_conv3d});
  c.expect(p_conv3d >= best - 0.05, "pca:" + std::to_string(k) + " Conv3D " + fmt(p_conv3d) + " more than 0.05 below best " + fmt(best));
  c.note("raw SEB/CBAM/Conv3D " + fmt(seb) + "/" + fmt(cbam) + "/" + fmt(conv3d) + ", pca:" + std::to_string(k) + " " +
         fmt(p_seb) + "/" + fmt(p_cbam) + "/" + fmt(p_conv3d));
}

void criterion_probe(Checks& c) {
  auto& run = seb_run();
  const auto features = run.embeddings(run.trained);
  const auto& labels = toy_data().labels;
  const auto probe = pipelines::linear_probe(features, labels, {});
  pipelines::ProbeOptions control;
  control.shuffle_labels = true;
  const auto shuffled = pipelines::linear_probe(features, labels, control);
  c.expect(probe.scores.overall_accuracy >= 0.9, "probe OA " + fmt(probe.scores.overall_accuracy));
  c.expect(shuffled.scores.overall_accuracy <= 0.25, "shuffled OA " + fmt(shuffled.scores.overall_accuracy));
  c.expect(probe.class_ids.size() == 8, "class count");
  c.note("OA " + fmt(probe.scores.overall_accuracy) + " on " + std::to_string(probe.test_count) +
         " held-out patches, shuffled " + fmt(shuffled.scores.overall_accuracy));
}

// ---------------------------------------------------------------------------
// 7. HSPL

void criterion_hspl(Checks& c) {
  nn::BackboneConfig cfg;
  cfg.input_bands = 4;
  cfg.stage_channels = {4, 8};
  cfg.stage_pool = {1, 2};
  cfg.stem_channels = 4;
  cfg.input_pool = 1;
  cfg.embedding_dim = 8;
  cfg.projection_dim = 4;
  auto params = nn::init_parameters(cfg, 4);
  std::mt19937_64 rng(7);
  nn::Tensor x({4, 8, 8});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : x.values()) v = u(rng);
  nn::fit_input_standardization(cfg, std::vector<nn::Tensor>{x}, params);

  const double self = metrics::hspl_value(x, x, cfg, params);
  c.expect(self == 0.0, "hspl(x, x) = " + sci(self));
  std::string values;
  for (double sigma : {0.01, 0.05, 0.2}) {
    auto noisy = x;
    std::normal_distribution<double> g(0.0, sigma);
    for (auto& v : noisy.values()) v = static_cast<float>(v + g(rng));
    const double d = metrics::hspl_value(noisy, x, cfg, params);
    c.expect(d > self, "noise " + fmt(sigma, 2) + " gives " + sci(d));
    values += (values.empty() ? "" : "/") + sci(d);
  }

  auto params64 = params.cast<double>();
  T64 target({4, 8, 8});
  for (std::size_t i = 0; i < x.size(); ++i) target[i] = x[i];
  double worst = 0;
  for (std::uint64_t probe = 0; probe < 5; ++probe) {
    nn::DoubleParameterSet ps;
    ps.add("pred", random_tensor({4, 8, 8}, rng, 0.0, 1.0));
    nn::GradCheckOptions opt;
    opt.seed = probe;
    const auto r = nn::gradient_check(
        [&](nn::Tape<double>& t, nn::DoubleParameterSet& p) {
          return metrics::hspl(t, t.parameter(p, "pred"), target, cfg, params64);
        },
        ps, opt);
    worst = std::max(worst, r.max_rel_error);
    c.expect(r.max_rel_error < 1e-3, "HSPL gradient rel " + sci(r.max_rel_error));
  }
  c.note("noise levels " + values + ", gradient rel " + sci(worst));
}

// ---------------------------------------------------------------------------
// 8. Determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void criterion_determinism(Checks& c) {
  const auto dir = fs::temp_directory_path() / ("hscl_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{dir};

  pipelines::SynthCommand s;
  s.spec.height = s.spec.width = 96;
  s.spec.bands = 16;
  s.spec.region_size = 16;
  s.cube_out = dir / "scene.hkc";
  s.labels_out = dir / "scene.hkl";
  pipelines::cmd_synth(s);

  // Cube round trip: load and rewrite, compare bytes and values.
  const auto cube = hsi::load_cube(s.cube_out);
  hsi::save_cube(cube, dir / "copy.hkc");
  c.expect(slurp(s.cube_out) == slurp(dir / "copy.hkc"), "synth cube rewrite differs");
  c.expect(hsi::load_cube(dir / "copy.hkc").data == cube.data, "cube values differ after reload");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = random_cube(3 + seed, 5, 2 + seed % 4, seed, -2.0f);
    hsi::save_cube(r, dir / "r.hkc");
    hsi::save_cube(hsi::load_cube(dir / "r.hkc"), dir / "r2.hkc");
    c.expect(slurp(dir / "r.hkc") == slurp(dir / "r2.hkc") && hsi::load_cube(dir / "r2.hkc").data == r.data,
             "random cube round trip " + std::to_string(seed));
  }

  pipelines::ExtractCommand e;
  e.cube = s.cube_out;
  e.labels = s.labels_out;
  e.archive_out = dir / "patches.hka";
  e.grid = {16, 0.0};
  pipelines::cmd_extract(e);

  std::vector<std::string> files;
  for (const char* name : {"a", "b"}) {
    pipelines::PretrainCommand p;
    p.archive = e.archive_out;
    p.out_dir = dir / name;
    p.backbone.stage_channels = {8, 16};
    p.backbone.stage_pool = {1, 2};
    p.backbone.stem_channels = 8;
    p.backbone.input_pool = 2;
    p.backbone.embedding_dim = 16;
    p.backbone.projection_dim = 8;
    p.training.epochs = 3;
    p.training.batch = 8;
    p.training.seed = 11;
    p.training.checkpoint_every = 1;
    pipelines::cmd_pretrain(p);
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename();
    if (name == "manifest.json") continue;  // holds wall-clock timings
    c.expect(fs::exists(dir / "b" / name) && slurp(entry.path()) == slurp(dir / "b" / name),
             name.string() + " differs between runs");
    ++compared;
  }
  c.expect(fs::exists(dir / "a" / "loss.tsv") && fs::exists(dir / "a" / "params_epoch0003.hkw"), "missing outputs");
  c.note(std::to_string(compared) + " run files byte-identical");
}

struct Criterion {
  int id;
  std::string title;
  std::function<void(Checks&)> run;
  double time_limit_s;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected, expected_failures;
  app.add_option("criteria", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--expect-fail", expected_failures, "Criteria whose FAIL does not change the exit code")
      ->delimiter(',');
  std::string report_path;
  app.add_option("--report", report_path, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path, std::ios::trunc);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", criterion_gradients, 60},
      {2, "oracle suite", criterion_oracles, 60},
      {3, "analytic anchors", criterion_anchors, 0},
      {4, "toy pretraining", criterion_toy, 0},
      {5, "ablation shape", criterion_ablation, 0},
      {6, "linear probe", criterion_probe, 0},
      {7, "HSPL sanity", criterion_hspl, 0},
      {8, "determinism", criterion_determinism, 0},
  };
  const std::set<int> want(selected.begin(), selected.end());
  const std::set<int> tolerated(expected_failures.begin(), expected_failures.end());

  int unexpected = 0;
  for (const auto& cr : criteria) {
    if (!want.empty() && !want.count(cr.id)) continue;
    Checks checks;
    const auto t0 = Clock::now();
    try {
      cr.run(checks);
    } catch (const std::exception& ex) {
      checks.expect(false, std::string("exception: ") + ex.what());
    }
    const double elapsed = seconds_since(t0);
    if (cr.time_limit_s > 0) checks.expect(elapsed < cr.time_limit_s, "runtime " + fmt(elapsed, 1) + " s");
    const bool ok = checks.passed();
    if (!ok && !tolerated.count(cr.id)) ++unexpected;
    char timing[32];
    std::snprintf(timing, sizeof timing, " [%.1f s]", elapsed);
    const std::string line = std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(cr.id) + " (" +
                             cr.title + "): " + checks.detail() + timing;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (report.is_open()) report << line << '\n' << std::flush;
  }
  return unexpected == 0 ? 0 : 1;
}
