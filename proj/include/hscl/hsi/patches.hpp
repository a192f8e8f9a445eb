#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hscl/hsi/cube.hpp"

namespace hscl::hsi {

struct PatchGridSpec {
  std::size_t patch_size = 160;
  double overlap_fraction = 0.05;

  // patch_size - round(overlap_fraction * patch_size); throws if < 1.
  std::size_t stride() const;
  void validate() const;
};

// Number of windows along an axis of `extent` pixels; trailing partial
// windows are dropped.
std::size_t windows_along(std::size_t extent, const PatchGridSpec& grid);

// Row-major tiling of the cube. When `labels` is given, each patch carries
// the majority class of its window (ties resolve to the lower id; label 0
// counts like any other id).
std::vector<Patch> extract_patches(const HyperCube& cube, const PatchGridSpec& grid,
                                   const std::string& cube_id = {},
                                   const LabelRaster* labels = nullptr);

Patch crop_patch(const HyperCube& cube, std::size_t row, std::size_t col, std::size_t side);

std::uint16_t majority_label(const LabelRaster& labels, std::size_t row, std::size_t col,
                             std::size_t side);

}  // namespace hscl::hsi
