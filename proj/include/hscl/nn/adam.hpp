#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hscl/nn/tensor.hpp"

namespace hscl::nn {

struct LrStep {
  std::uint64_t threshold = 0;
  double multiplier = 1.0;
  bool operator==(const LrStep&) const = default;
};

/// Adam moments plus a stepped learning-rate schedule.
struct OptimizerState {
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<LrStep> schedule;
  std::uint64_t step = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
  std::set<std::string> frozen;  // never updated

  void validate() const;
  // base_lr times every multiplier whose threshold is <= step.
  double lr_at(std::uint64_t at_step) const;
};

// Decay by `factor` at each listed fraction of `total_steps`.
std::vector<LrStep> stepped_schedule(std::uint64_t total_steps, const std::vector<double>& fractions = {0.4, 0.8},
                                     double factor = 0.1);

// One bias-corrected update using each parameter's grad slot. Parameters
// without a grad slot are treated as having zero gradient.
void adam_step(ParameterSet& params, OptimizerState& state);

}  // namespace hscl::nn
