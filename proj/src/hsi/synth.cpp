#include "hscl/hsi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "hscl/error.hpp"

namespace hscl::hsi {
namespace {

// Sum of a few Gaussian bumps over normalised wavelength in [0, 1].
std::vector<double> smooth_curve(std::mt19937_64& rng, std::size_t bands, int bumps, double min_width,
                                 double max_width) {
  std::uniform_real_distribution<double> centre(0.0, 1.0);
  std::uniform_real_distribution<double> width(min_width, max_width);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::vector<double> curve(bands, 0.0);
  for (int k = 0; k < bumps; ++k) {
    const double mu = centre(rng);
    const double sd = width(rng);
    const double a = amp(rng);
    for (std::size_t b = 0; b < bands; ++b) {
      const double x = bands == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(bands - 1);
      curve[b] += a * std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd));
    }
  }
  return curve;
}

// Bilinearly upsampled lattice noise thresholded so that `fraction` of the
// side x side square is set.
std::vector<std::uint8_t> blob_mask(std::mt19937_64& rng, std::size_t side, std::size_t scale, double fraction) {
  const std::size_t nodes = side / scale + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lattice(nodes * nodes);
  for (auto& v : lattice) v = u(rng);
  const double ox = u(rng) * static_cast<double>(scale);
  const double oy = u(rng) * static_cast<double>(scale);
  std::vector<double> field(side * side);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double y = (static_cast<double>(r) + oy) / static_cast<double>(scale);
      const double x = (static_cast<double>(c) + ox) / static_cast<double>(scale);
      const auto y0 = static_cast<std::size_t>(y);
      const auto x0 = static_cast<std::size_t>(x);
      const double fy = y - static_cast<double>(y0);
      const double fx = x - static_cast<double>(x0);
      auto at = [&](std::size_t i, std::size_t j) { return lattice[std::min(i, nodes - 1) * nodes + std::min(j, nodes - 1)]; };
      field[r * side + c] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                            fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
    }
  }
  auto sorted = field;
  const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * side * side)), 1, side * side);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1), sorted.end(),
                   std::greater<>());
  const double threshold = sorted[keep - 1];
  std::vector<std::uint8_t> mask(side * side);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = field[i] >= threshold ? 1 : 0;
  return mask;
}

}  // namespace

std::vector<double> legendre_mix(std::mt19937_64& rng, std::size_t bands, std::size_t degree, double amplitude) {
  std::uniform_real_distribution<double> coef(-amplitude, amplitude);
  std::vector<double> c(degree + 1);
  for (auto& v : c) v = coef(rng);
  std::vector<double> out(bands, 0.0);
  for (std::size_t b = 0; b < bands; ++b) {
    const double x = bands == 1 ? 0.0 : 2.0 * static_cast<double>(b) / static_cast<double>(bands - 1) - 1.0;
    // Bonnet recursion.
    double p0 = 1.0, p1 = x;
    out[b] = c[0];
    if (degree >= 1) out[b] += c[1] * p1;
    for (std::size_t n = 2; n <= degree; ++n) {
      const double p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / static_cast<double>(n);
      out[b] += c[n] * p2;
      p0 = p1;
      p1 = p2;
    }
  }
  return out;
}

void SynthSpec::validate() const {
  if (classes < 2) throw ValidationError("synth needs at least 2 classes");
  if (bands < 4) throw ValidationError("synth needs at least 4 bands");
  if (height == 0 || width == 0) throw ValidationError("synth size must be positive");
  if (region_size == 0) throw ValidationError("region size must be positive");
  if (classes > 65535) throw ValidationError("too many classes for 16-bit labels");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  if (!(class_contrast >= 0.0)) throw ValidationError("class contrast must be non-negative");
  if (!(brightness_min > 0.0) || !(brightness_max >= brightness_min)) {
    throw ValidationError("brightness range must satisfy 0 < min <= max");
  }
  if (!(offset_max >= offset_min) || !std::isfinite(offset_min) || !std::isfinite(offset_max)) {
    throw ValidationError("offset range must satisfy min <= max");
  }
  if (!(continuum_amplitude >= 0.0)) throw ValidationError("continuum amplitude must be non-negative");
  if (paired_materials) {
    if (!(class_fraction_min > 0.0) || !(class_fraction_max >= class_fraction_min) || !(class_fraction_max <= 1.0)) {
      throw ValidationError("class fraction range must satisfy 0 < min <= max <= 1");
    }
    if (blob_scale == 0) throw ValidationError("blob scale must be positive");
  }
}

SynthScene synth_cube(std::uint64_t seed, const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);

  // Shared base reflectance in roughly [0.25, 0.55], plus per-class deviations
  // normalised to unit peak magnitude.
  auto base = smooth_curve(rng, spec.bands, 4, 0.08, 0.25);
  {
    const auto [lo, hi] = std::minmax_element(base.begin(), base.end());
    const double span = std::max(*hi - *lo, 1e-9);
    for (auto& v : base) v = 0.25 + 0.3 * (v - *lo) / span;
  }
  // Narrower absorption-like features than the continuum terms.
  SynthScene scene;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    auto dev = smooth_curve(rng, spec.bands, 3, 0.04, 0.12);
    double peak = 0.0;
    for (double v : dev) peak = std::max(peak, std::abs(v));
    peak = std::max(peak, 1e-9);
    std::vector<float> curve(spec.bands), partner(spec.bands);
    for (std::size_t b = 0; b < spec.bands; ++b) {
      const double d = spec.class_contrast * dev[b] / peak;
      curve[b] = static_cast<float>(std::clamp(base[b] + d, 0.0, 1.0));
      partner[b] = static_cast<float>(std::clamp(base[b] - d, 0.0, 1.0));
    }
    scene.endmembers.push_back(std::move(curve));
    if (spec.paired_materials) scene.partners.push_back(std::move(partner));
  }

  const std::size_t region_rows = (spec.height + spec.region_size - 1) / spec.region_size;
  const std::size_t region_cols = (spec.width + spec.region_size - 1) / spec.region_size;
  const std::size_t regions = region_rows * region_cols;
  std::vector<std::uint16_t> region_class(regions);
  std::vector<double> region_gain(regions);
  std::vector<double> region_offset(regions);
  std::vector<std::vector<double>> region_continuum(regions, std::vector<double>(spec.bands, 0.0));
  std::vector<std::vector<std::uint8_t>> region_mask(regions);
  std::vector<std::uint16_t> round(spec.classes);
  std::iota(round.begin(), round.end(), std::uint16_t{1});
  std::uniform_real_distribution<double> gain(spec.brightness_min, spec.brightness_max);
  for (std::size_t r = 0; r < regions; ++r) {
    if (r % spec.classes == 0) std::shuffle(round.begin(), round.end(), rng);
    region_class[r] = round[r % spec.classes];
    region_gain[r] = spec.brightness_min == spec.brightness_max ? spec.brightness_min : gain(rng);
    region_offset[r] = spec.offset_min == spec.offset_max
                           ? spec.offset_min
                           : std::uniform_real_distribution<double>(spec.offset_min, spec.offset_max)(rng);
    if (spec.continuum_amplitude > 0.0) region_continuum[r] = legendre_mix(rng, spec.bands, spec.continuum_degree,
                                                                           spec.continuum_amplitude);
    if (spec.paired_materials) {
      const double fraction =
          std::uniform_real_distribution<double>(spec.class_fraction_min, spec.class_fraction_max)(rng);
      region_mask[r] = blob_mask(rng, spec.region_size, spec.blob_scale, fraction);
    }
  }

  scene.cube = HyperCube(spec.height, spec.width, spec.bands);
  scene.labels.height = spec.height;
  scene.labels.width = spec.width;
  scene.labels.labels.resize(spec.height * spec.width);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t row = 0; row < spec.height; ++row) {
    for (std::size_t col = 0; col < spec.width; ++col) {
      const std::size_t region = (row / spec.region_size) * region_cols + col / spec.region_size;
      const auto cls = region_class[region];
      scene.labels.labels[row * spec.width + col] = cls;
      const bool second = spec.paired_materials &&
                          !region_mask[region][(row % spec.region_size) * spec.region_size + col % spec.region_size];
      const auto& curve = second ? scene.partners[cls - 1] : scene.endmembers[cls - 1];
      for (std::size_t b = 0; b < spec.bands; ++b) {
        const double material = curve[b];
        double v = region_gain[region] * material + region_offset[region] + region_continuum[region][b];
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
        scene.cube.at(b, row, col) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return scene;
}

}  // namespace hscl::hsi
