#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hscl::hsi {

/// Reflectance volume stored band-sequential: sample (row, col) of band b
/// lives at `b * height * width + row * width + col`.
struct HyperCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> data;
  std::vector<float> wavelengths_nm;

  HyperCube() = default;
  HyperCube(std::size_t h, std::size_t w, std::size_t c);

  std::size_t pixel_count() const { return height * width; }
  std::size_t index(std::size_t band, std::size_t row, std::size_t col) const {
    return band * height * width + row * width + col;
  }
  float& at(std::size_t band, std::size_t row, std::size_t col) { return data[index(band, row, col)]; }
  float at(std::size_t band, std::size_t row, std::size_t col) const { return data[index(band, row, col)]; }

  std::span<float> band(std::size_t b) { return {data.data() + b * pixel_count(), pixel_count()}; }
  std::span<const float> band(std::size_t b) const {
    return {data.data() + b * pixel_count(), pixel_count()};
  }

  // Gathers the C-vector of one pixel.
  std::vector<float> spectrum(std::size_t row, std::size_t col) const;

  bool operator==(const HyperCube&) const = default;
};

inline constexpr float kEnmapMinWavelength = 420.0f;
inline constexpr float kEnmapMaxWavelength = 2450.0f;

// Throws ValidationError naming the first violated invariant.
void validate(const HyperCube& cube);
// Additionally requires every wavelength to lie in the EnMAP range.
void validate_enmap_like(const HyperCube& cube);

// Evenly spaced band centres across [first, last].
std::vector<float> linear_wavelengths(std::size_t bands, float first = kEnmapMinWavelength,
                                      float last = kEnmapMaxWavelength);

struct Patch {
  HyperCube data;  // S x S x C window
  std::size_t source_row = 0;
  std::size_t source_col = 0;
  std::string source_cube_id;
  // 0 = unlabeled; filled by majority vote when a label raster is known.
  std::uint16_t label = 0;

  std::size_t side() const { return data.height; }
  std::size_t bands() const { return data.bands; }
  bool operator==(const Patch&) const = default;
};

void validate(const Patch& patch);

struct LabelRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;  // row-major, 0 = unlabeled

  std::uint16_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
  bool operator==(const LabelRaster&) const = default;
};

}  // namespace hscl::hsi
