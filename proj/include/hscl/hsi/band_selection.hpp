#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "hscl/hsi/cube.hpp"

namespace hscl::hsi {

struct FullBands {};

struct ManualBands {
  std::vector<std::size_t> indices;  // strictly increasing
};

struct PcaBands {
  std::size_t input_bands = 0;
  std::size_t components = 0;
  std::vector<double> mean;           // input_bands
  std::vector<double> basis;          // input_bands x components, row-major
  std::vector<double> eigenvalues;    // all input_bands eigenvalues, non-increasing
  bool degenerate = false;            // zero covariance; basis is the identity prefix

  double basis_at(std::size_t band, std::size_t component) const { return basis[band * components + component]; }
  // Fraction of total variance captured by the first `k` components.
  double explained_variance_ratio(std::size_t k) const;
};

class BandSelector {
 public:
  using Mode = std::variant<FullBands, ManualBands, PcaBands>;

  BandSelector() = default;
  static BandSelector full() { return BandSelector(FullBands{}); }
  // `input_bands` is the channel count the selector will be applied to.
  static BandSelector manual(std::vector<std::size_t> indices, std::size_t input_bands);
  static BandSelector pca(PcaBands fitted);

  const Mode& mode() const { return mode_; }
  bool is_full() const { return std::holds_alternative<FullBands>(mode_); }
  // Output channel count for an input of `input_bands` channels.
  std::size_t output_bands(std::size_t input_bands) const;
  // Throws unless this selector accepts `input_bands` channels.
  void check_input(std::size_t input_bands) const;

 private:
  explicit BandSelector(Mode m) : mode_(std::move(m)) {}
  Mode mode_ = FullBands{};
  std::size_t manual_input_bands_ = 0;
};

struct PcaOptions {
  std::size_t components = 0;
  // 0 uses every pixel; otherwise a seeded uniform subsample of pixels.
  std::size_t max_pixels = 0;
  std::uint64_t seed = 0;
};

// PCA over pixel spectra pooled from all patches.
PcaBands fit_pca(std::span<const Patch> patches, const PcaOptions& options);

Patch select_bands(const Patch& patch, const BandSelector& selector);

// Maps PCA scores back to the original band space.
HyperCube pca_reconstruct(const HyperCube& scores, const PcaBands& pca);

}  // namespace hscl::hsi
