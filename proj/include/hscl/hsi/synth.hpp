#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "hscl/hsi/cube.hpp"

namespace hscl::hsi {

struct SynthSpec {
  std::size_t classes = 8;
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t bands = 32;
  double noise_sigma = 0.01;
  // Side of the square regions; each region holds one class.
  std::size_t region_size = 32;
  // Amplitude of the class-specific deviation from the shared base curve.
  double class_contrast = 0.2;
  // Per-region illumination gain drawn uniformly from this range.
  double brightness_min = 1.0;
  double brightness_max = 1.0;
  // Per-region additive offset shared by all bands, drawn from this range.
  double offset_min = 0.0;
  double offset_max = 0.0;
  // Per-region smooth continuum: Legendre terms up to `continuum_degree`
  // over normalised wavelength, coefficients uniform in +-amplitude.
  double continuum_amplitude = 0.0;
  std::size_t continuum_degree = 2;
  // Two-material classes: when set, class k is made of the pair
  // base +- contrast * deviation_k laid out as blobs of roughly `blob_scale`
  // pixels, the first material covering a fraction drawn from
  // [class_fraction_min, class_fraction_max] of each region. At fraction 0.5
  // every class has the same mean spectrum.
  bool paired_materials = false;
  double class_fraction_min = 0.5;
  double class_fraction_max = 0.5;
  std::size_t blob_scale = 8;

  void validate() const;
};

struct SynthScene {
  HyperCube cube;
  LabelRaster labels;                         // class ids 1..classes
  std::vector<std::vector<float>> endmembers; // one curve per class, index = id - 1
  std::vector<std::vector<float>> partners;   // second material per class when paired
};

// Regions tile the scene in row-major order and receive classes from a
// reshuffled round-robin, so every class appears (near-)equally often.
// Sum of Legendre polynomials P_0..P_degree sampled at `bands` evenly spaced
// points of [-1, 1], each weighted by a coefficient uniform in +-amplitude.
std::vector<double> legendre_mix(std::mt19937_64& rng, std::size_t bands, std::size_t degree, double amplitude);

SynthScene synth_cube(std::uint64_t seed, const SynthSpec& spec);

}  // namespace hscl::hsi
