#include "hscl/hsi/patches.hpp"

#include <cmath>
#include <map>

#include "hscl/error.hpp"

namespace hscl::hsi {

std::size_t PatchGridSpec::stride() const {
  validate();
  const auto overlap = static_cast<long long>(std::llround(overlap_fraction * static_cast<double>(patch_size)));
  return static_cast<std::size_t>(static_cast<long long>(patch_size) - overlap);
}

void PatchGridSpec::validate() const {
  if (patch_size < 1) throw ValidationError("patch size must be at least 1");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw ValidationError("overlap fraction must lie in [0, 1)");
  }
  const auto overlap = std::llround(overlap_fraction * static_cast<double>(patch_size));
  if (static_cast<long long>(patch_size) - overlap < 1) {
    throw ValidationError("overlap " + std::to_string(overlap_fraction) + " leaves a stride below 1 for patch size " +
                          std::to_string(patch_size));
  }
}

std::size_t windows_along(std::size_t extent, const PatchGridSpec& grid) {
  const std::size_t stride = grid.stride();
  if (extent < grid.patch_size) return 0;
  return (extent - grid.patch_size) / stride + 1;
}

Patch crop_patch(const HyperCube& cube, std::size_t row, std::size_t col, std::size_t side) {
  if (row + side > cube.height || col + side > cube.width) {
    throw ValidationError("patch window exceeds cube bounds");
  }
  Patch p;
  p.data.height = side;
  p.data.width = side;
  p.data.bands = cube.bands;
  p.data.wavelengths_nm = cube.wavelengths_nm;
  p.data.data.resize(side * side * cube.bands);
  p.source_row = row;
  p.source_col = col;
  for (std::size_t b = 0; b < cube.bands; ++b) {
    for (std::size_t r = 0; r < side; ++r) {
      const float* src = cube.data.data() + cube.index(b, row + r, col);
      float* dst = p.data.data.data() + p.data.index(b, r, 0);
      std::copy(src, src + side, dst);
    }
  }
  return p;
}

std::uint16_t majority_label(const LabelRaster& labels, std::size_t row, std::size_t col, std::size_t side) {
  std::map<std::uint16_t, std::size_t> votes;
  for (std::size_t r = row; r < row + side; ++r) {
    for (std::size_t c = col; c < col + side; ++c) ++votes[labels.at(r, c)];
  }
  std::uint16_t best = 0;
  std::size_t best_count = 0;
  for (const auto& [id, count] : votes) {
    if (count > best_count) {
      best = id;
      best_count = count;
    }
  }
  return best;
}

std::vector<Patch> extract_patches(const HyperCube& cube, const PatchGridSpec& grid, const std::string& cube_id,
                                   const LabelRaster* labels) {
  grid.validate();
  if (cube.height < grid.patch_size || cube.width < grid.patch_size) {
    throw ValidationError("cube " + std::to_string(cube.height) + "x" + std::to_string(cube.width) +
                          " is smaller than patch size " + std::to_string(grid.patch_size));
  }
  if (labels && (labels->height != cube.height || labels->width != cube.width)) {
    throw ValidationError("label raster extent does not match the cube");
  }
  const std::size_t stride = grid.stride();
  const std::size_t rows = windows_along(cube.height, grid);
  const std::size_t cols = windows_along(cube.width, grid);
  std::vector<Patch> patches;
  patches.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      Patch p = crop_patch(cube, i * stride, j * stride, grid.patch_size);
      p.source_cube_id = cube_id;
      if (labels) p.label = majority_label(*labels, p.source_row, p.source_col, grid.patch_size);
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

}  // namespace hscl::hsi
