#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "hscl/hsi/band_selection.hpp"
#include "hscl/hsi/cube.hpp"
#include "hscl/nn/tensor.hpp"

namespace hscl::contrastive {

struct HorizontalFlip {
  double p = 0.5;
};
struct VerticalFlip {
  double p = 0.5;
};
// With probability p, rotates by a uniformly drawn multiple of 90 degrees
// (one to three quarter turns).
struct Rotate90 {
  double p = 0.5;
};
// Crops a square covering a uniform fraction of the patch area in
// [min_scale, max_scale] and resizes it back bilinearly.
struct CropResize {
  double min_scale = 0.5;
  double max_scale = 1.0;
  double p = 1.0;
};
struct SpectralNoise {
  double sigma = 0.01;
};
// Zeroes each band independently; shapes never change.
struct BandDropout {
  double p = 0.1;
};
// Multiplies the whole patch by a gain drawn from [min_gain, max_gain].
struct Brightness {
  double min_gain = 0.8;
  double max_gain = 1.2;
};

// Adds one offset drawn from [min_offset, max_offset] to every sample.
struct Offset {
  double min_offset = -0.1;
  double max_offset = 0.1;
};

// Adds one smooth curve (Legendre terms up to `degree` over the band axis,
// coefficients uniform in +-amplitude) to every pixel.
struct Continuum {
  double amplitude = 0.05;
  std::size_t degree = 2;
};

using AugmentOp = std::variant<HorizontalFlip, VerticalFlip, Rotate90, CropResize, SpectralNoise, BandDropout,
                               Brightness, Offset, Continuum>;

struct AugmentationSpec {
  std::vector<AugmentOp> ops;  // applied in order
  std::uint64_t seed = 0;      // mixed into every view's random stream

  void validate() const;
  // The default desk-scale pipeline used by pretraining.
  static AugmentationSpec standard();
};

// One-line description, e.g. "hflip(p=0.5);crop(0.3..1,p=1);seed=0".
std::string to_string(const AugmentationSpec& spec);

using Rng = std::mt19937_64;

// Per-view stream derived from (seed, epoch, step, view).
Rng view_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t step, std::uint64_t view);

// `patch` is [C,S,S] with S square. Returns a tensor of the same shape.
nn::Tensor augment(const nn::Tensor& patch, const AugmentationSpec& spec, Rng& rng);
hsi::Patch augment(const hsi::Patch& patch, const AugmentationSpec& spec, Rng& rng);

nn::Tensor to_tensor(const hsi::HyperCube& cube);
// Band selection on a [C,H,W] tensor.
nn::Tensor select_bands(const nn::Tensor& x, const hsi::BandSelector& selector);

}  // namespace hscl::contrastive
