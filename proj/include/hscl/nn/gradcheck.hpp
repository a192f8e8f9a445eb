#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hscl/nn/tape.hpp"

namespace hscl::nn {

using DoubleParameterSet = BasicParameterSet<double>;

// Builds a scalar loss on the tape from the given parameters. Inputs that
// should be checked too can be registered as parameters.
using LossBuilder = std::function<Var<double>(Tape<double>&, DoubleParameterSet&)>;

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  // A probe closer than this to a ReLU/max switch point is jittered.
  double kink_margin = 1e-3;
  std::size_t max_jitters = 8;
  double jitter_scale = 1e-2;
  std::uint64_t seed = 17;
  // 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coords_per_param = 0;
};

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // finite difference straddled a kink
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  bool passed = false;
  bool nonsmooth_probe = false;  // base point sat on or near a kink
  std::size_t jitters = 0;
  std::size_t skipped = 0;
};

// Compares reverse-mode gradients with central differences. Relative error
// per coordinate is |a - n| / max(|a|, |n|, 1e-3 * scale, 1e-8) where scale
// is the largest gradient magnitude of that parameter. Throws RuntimeError
// when the loss turns non-finite.
GradCheckReport gradient_check(const LossBuilder& build, DoubleParameterSet& params,
                               const GradCheckOptions& options = {});

}  // namespace hscl::nn
