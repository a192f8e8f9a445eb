#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "hscl/hsi/cube.hpp"

namespace hscl::hsi {

enum class CubeFormatErrorKind {
  kBadMagic,
  kTruncated,
  kDimensionMismatch,
  kNonIncreasingWavelengths,
  kNonFiniteSample,
};

class CubeFormatError : public std::runtime_error {
 public:
  CubeFormatError(CubeFormatErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CubeFormatErrorKind kind() const { return kind_; }

 private:
  CubeFormatErrorKind kind_;
};

// HKC1: "HKC1", u32 H, W, C, C f32 wavelengths, H*W*C f32 samples
// (band-sequential), all little-endian.
HyperCube load_cube(const std::filesystem::path& path);
void save_cube(const HyperCube& cube, const std::filesystem::path& path);

// Stream forms used by the patch archive, which concatenates HKC1 records.
// `read_cube` reads exactly one record; `expect_eof` additionally rejects
// trailing bytes (payload longer than the header implies).
HyperCube read_cube(std::istream& in, bool expect_eof = false);
void write_cube(const HyperCube& cube, std::ostream& out);
std::uint64_t cube_record_bytes(const HyperCube& cube);

// HKL1: "HKL1", u32 H, W, then H*W u16 class ids.
LabelRaster load_labels(const std::filesystem::path& path);
void save_labels(const LabelRaster& labels, const std::filesystem::path& path);

// Writes to a sibling temporary and renames over `path`, so a failed write
// never leaves a partial file behind.
template <class Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer);

}  // namespace hscl::hsi

#include "hscl/hsi/io_inl.hpp"
