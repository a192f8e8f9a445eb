#include "hscl/nn/adam.hpp"

#include <cmath>
#include <utility>

#include "hscl/error.hpp"

namespace hscl::nn {

void OptimizerState::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  for (const auto& s : schedule) {
    if (!(s.multiplier > 0.0 && s.multiplier <= 1.0)) {
      throw ValidationError("schedule multipliers must lie in (0,1]");
    }
  }
}

double OptimizerState::lr_at(std::uint64_t at_step) const {
  double lr = base_lr;
  for (const auto& s : schedule)
    if (s.threshold <= at_step) lr *= s.multiplier;
  return lr;
}

std::vector<LrStep> stepped_schedule(std::uint64_t total_steps, const std::vector<double>& fractions, double factor) {
  std::vector<LrStep> out;
  for (double f : fractions) {
    const auto at = static_cast<std::uint64_t>(std::llround(f * static_cast<double>(total_steps)));
    out.push_back({at, factor});
  }
  return out;
}

void adam_step(ParameterSet& params, OptimizerState& state) {
  state.validate();
  const double lr = state.lr_at(state.step);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, tensor] : params) {
    if (state.frozen.count(name)) continue;
    auto& [m, v] = state.moments[name];
    if (m.empty()) {
      m.assign(tensor.size(), 0.0);
      v.assign(tensor.size(), 0.0);
    }
    if (m.size() != tensor.size() || v.size() != tensor.size()) {
      throw ValidationError("optimizer moments for '" + name + "' do not match the parameter shape");
    }
    const float* g = tensor.has_grad() ? std::as_const(tensor).grad().data() : nullptr;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
      if (update != 0.0) tensor[i] = static_cast<float>(tensor[i] - update);
    }
  }
  ++state.step;
}

}  // namespace hscl::nn
