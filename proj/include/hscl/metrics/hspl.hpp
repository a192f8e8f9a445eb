#pragma once

#include <cstddef>
#include <span>

#include "hscl/nn/backbone.hpp"

namespace hscl::metrics {

// Perceptual distance through a frozen backbone: the mean squared
// difference between the stage outputs of `pred` and `target`, summed over
// `layers` (stage indices; empty means every stage). The target is run on a
// private tape; `pred` keeps its gradient on `tape`. Backbone parameters are
// read as constants.
template <class Real>
nn::Var<Real> hspl(nn::Tape<Real>& tape, nn::Var<Real> pred, const nn::BasicTensor<Real>& target,
                   const nn::BackboneConfig& config, nn::BasicParameterSet<Real>& params,
                   std::span<const std::size_t> layers = {});

// Value only.
double hspl_value(const nn::Tensor& pred, const nn::Tensor& target, const nn::BackboneConfig& config,
                  nn::ParameterSet& params, std::span<const std::size_t> layers = {});

}  // namespace hscl::metrics
