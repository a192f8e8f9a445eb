#include "hscl/metrics/hspl.hpp"

#include <optional>
#include <string>
#include <vector>

#include "hscl/error.hpp"
#include "hscl/nn/ops.hpp"

namespace hscl::metrics {

template <class Real>
nn::Var<Real> hspl(nn::Tape<Real>& tape, nn::Var<Real> pred, const nn::BasicTensor<Real>& target,
                   const nn::BackboneConfig& config, nn::BasicParameterSet<Real>& params,
                   std::span<const std::size_t> layers) {
  if (pred.value().shape() != target.shape()) {
    throw ValidationError("hspl shape mismatch: " + nn::to_string(pred.value().shape()) + " vs " +
                          nn::to_string(target.shape()));
  }
  const std::size_t stages = config.stage_channels.size();
  std::vector<std::size_t> chosen(layers.begin(), layers.end());
  if (chosen.empty()) {
    for (std::size_t i = 0; i < stages; ++i) chosen.push_back(i);
  }
  for (auto l : chosen) {
    if (l >= stages) throw ValidationError("hspl layer " + std::to_string(l) + " out of range");
  }

  nn::Tape<Real> reference;
  reference.freeze_parameters();
  const auto ref = nn::backbone_forward(reference, reference.leaf(target, false), config, params);

  tape.freeze_parameters();
  const auto out = nn::backbone_forward(tape, pred, config, params);
  tape.freeze_parameters(false);

  std::optional<nn::Var<Real>> total;
  for (auto l : chosen) {
    auto term = nn::mean_squared_error(out.stage_outputs[l], tape.leaf(ref.stage_outputs[l].value(), false));
    total = total ? nn::add(*total, term) : term;
  }
  return *total;
}

double hspl_value(const nn::Tensor& pred, const nn::Tensor& target, const nn::BackboneConfig& config,
                  nn::ParameterSet& params, std::span<const std::size_t> layers) {
  nn::Tape<float> tape;
  auto x = tape.leaf(pred, false);
  return hspl(tape, x, target, config, params, layers).value()[0];
}

template nn::Var<float> hspl(nn::Tape<float>&, nn::Var<float>, const nn::BasicTensor<float>&,
                             const nn::BackboneConfig&, nn::BasicParameterSet<float>&, std::span<const std::size_t>);
template nn::Var<double> hspl(nn::Tape<double>&, nn::Var<double>, const nn::BasicTensor<double>&,
                              const nn::BackboneConfig&, nn::BasicParameterSet<double>&,
                              std::span<const std::size_t>);

}  // namespace hscl::metrics
