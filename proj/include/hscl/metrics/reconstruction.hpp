#pragma once

#include <cstddef>
#include <vector>

#include "hscl/hsi/cube.hpp"

namespace hscl::metrics {

// Reference-vs-estimate quality of a reconstructed cube. Every function
// throws ValidationError when the shapes differ.

double rmse(const hsi::HyperCube& ref, const hsi::HyperCube& est);

// 10 log10(peak^2 / MSE) in dB; +infinity when the cubes are identical.
double psnr(const hsi::HyperCube& ref, const hsi::HyperCube& est, double peak = 1.0);

// Mean spectral angle in degrees. Zero-norm reference spectra are
// rejected; zero-norm estimate spectra count as 90 degrees.
double sam(const hsi::HyperCube& ref, const hsi::HyperCube& est);

struct CcResult {
  double value = 0.0;
  // Bands whose estimate is constant; each contributes 0 to the mean.
  std::vector<std::size_t> constant_estimate_bands;
};

// Per-band Pearson correlation averaged over bands. Constant reference
// bands are rejected.
CcResult cc(const hsi::HyperCube& ref, const hsi::HyperCube& est);

// 100 * ratio * sqrt(mean_b (RMSE_b / mean_b(ref))^2), ratio in (0, 1].
double ergas(const hsi::HyperCube& ref, const hsi::HyperCube& est, double ratio);

inline constexpr double kDefaultErgasRatio = 0.25;

}  // namespace hscl::metrics
