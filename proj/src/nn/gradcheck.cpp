#include "hscl/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hscl/error.hpp"

namespace hscl::nn {
namespace {

struct Probe {
  double loss;
  double kink_distance;
  std::uint64_t signature;
};

Probe evaluate(const LossBuilder& build, DoubleParameterSet& params) {
  Tape<double> tape;
  auto loss = build(tape, params);
  if (loss.value().size() != 1) throw ValidationError("gradient_check needs a scalar loss");
  const double v = loss.value()[0];
  if (!std::isfinite(v)) throw RuntimeError("non-finite loss during gradient check");
  return {v, tape.min_kink_distance(), tape.kink_signature()};
}

}  // namespace

GradCheckReport gradient_check(const LossBuilder& build, DoubleParameterSet& params, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ValidationError("finite-difference step must be positive");
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);

  Probe base = evaluate(build, params);
  if (base.kink_distance < options.kink_margin) report.nonsmooth_probe = true;
  while (base.kink_distance < options.kink_margin && report.jitters < options.max_jitters) {
    std::uniform_real_distribution<double> jitter(-options.jitter_scale, options.jitter_scale);
    for (auto& [_, t] : params)
      for (auto& v : t.values()) v += jitter(rng) * std::max(1.0, std::abs(v));
    ++report.jitters;
    base = evaluate(build, params);
  }

  params.clear_grad();
  {
    Tape<double> tape;
    auto loss = build(tape, params);
    tape.backward(loss);
  }

  for (auto& [name, t] : params) {
    ParamGradError err;
    err.name = name;
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::pair<double, double>> pairs;
    for (auto i : coords) {
      const double original = t[i];
      t[i] = original + options.step;
      const Probe plus = evaluate(build, params);
      t[i] = original - options.step;
      const Probe minus = evaluate(build, params);
      t[i] = original;
      if (plus.signature != base.signature || minus.signature != base.signature) {
        ++err.skipped;
        continue;
      }
      pairs.emplace_back(analytic[i], (plus.loss - minus.loss) / (2.0 * options.step));
    }
    double scale = 0.0;
    for (auto [a, n] : pairs) scale = std::max({scale, std::abs(a), std::abs(n)});
    for (auto [a, n] : pairs) {
      const double denom = std::max({std::abs(a), std::abs(n), 1e-3 * scale, 1e-8});
      err.max_rel_error = std::max(err.max_rel_error, std::abs(a - n) / denom);
      err.max_abs_error = std::max(err.max_abs_error, std::abs(a - n));
    }
    err.checked = pairs.size();
    report.skipped += err.skipped;
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.params.push_back(err);
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace hscl::nn
