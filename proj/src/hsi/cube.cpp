#include "hscl/hsi/cube.hpp"

#include <cmath>
#include <string>

#include "hscl/error.hpp"

namespace hscl::hsi {

HyperCube::HyperCube(std::size_t h, std::size_t w, std::size_t c)
    : height(h), width(w), bands(c), data(h * w * c, 0.0f), wavelengths_nm(linear_wavelengths(c)) {}

std::vector<float> HyperCube::spectrum(std::size_t row, std::size_t col) const {
  std::vector<float> s(bands);
  for (std::size_t b = 0; b < bands; ++b) s[b] = at(b, row, col);
  return s;
}

void validate(const HyperCube& cube) {
  if (cube.height == 0 || cube.width == 0 || cube.bands == 0) {
    throw ValidationError("cube has a zero extent");
  }
  if (cube.data.size() != cube.height * cube.width * cube.bands) {
    throw ValidationError("cube data length " + std::to_string(cube.data.size()) +
                          " does not equal height*width*bands = " +
                          std::to_string(cube.height * cube.width * cube.bands));
  }
  if (cube.wavelengths_nm.size() != cube.bands) {
    throw ValidationError("cube has " + std::to_string(cube.wavelengths_nm.size()) +
                          " wavelengths for " + std::to_string(cube.bands) + " bands");
  }
  for (std::size_t i = 0; i < cube.data.size(); ++i) {
    if (!std::isfinite(cube.data[i])) {
      throw ValidationError("cube sample " + std::to_string(i) + " is not finite");
    }
  }
  for (std::size_t b = 0; b < cube.bands; ++b) {
    if (!std::isfinite(cube.wavelengths_nm[b])) throw ValidationError("wavelength is not finite");
    if (b > 0 && !(cube.wavelengths_nm[b] > cube.wavelengths_nm[b - 1])) {
      throw ValidationError("wavelengths are not strictly increasing at band " + std::to_string(b));
    }
  }
}

void validate_enmap_like(const HyperCube& cube) {
  validate(cube);
  for (float w : cube.wavelengths_nm) {
    if (w < kEnmapMinWavelength || w > kEnmapMaxWavelength) {
      throw ValidationError("wavelength " + std::to_string(w) + " nm outside [420, 2450]");
    }
  }
}

std::vector<float> linear_wavelengths(std::size_t bands, float first, float last) {
  std::vector<float> w(bands);
  if (bands == 1) {
    w[0] = first;
    return w;
  }
  const double step = (static_cast<double>(last) - first) / static_cast<double>(bands - 1);
  for (std::size_t b = 0; b < bands; ++b) w[b] = static_cast<float>(first + step * static_cast<double>(b));
  return w;
}

void validate(const Patch& patch) {
  validate(patch.data);
  if (patch.data.height != patch.data.width) throw ValidationError("patch is not square");
}

}  // namespace hscl::hsi
