#include "hscl/hsi/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include "hscl/binary_io.hpp"
#include "hscl/error.hpp"

namespace hscl::hsi {
namespace {

constexpr std::string_view kCubeMagic = "HKC1";
constexpr std::string_view kLabelMagic = "HKL1";

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

// Reads `count` little-endian f32 values in one block.
bool read_f32_block(std::istream& in, std::vector<float>& out, std::size_t count) {
  std::vector<unsigned char> raw(count * 4);
  if (count == 0) {
    out.clear();
    return true;
  }
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    return false;
  }
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = raw.data() + 4 * i;
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    out[i] = std::bit_cast<float>(bits);
  }
  return true;
}

void write_f32_block(std::ostream& out, const std::vector<float>& values) {
  std::vector<unsigned char> raw(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int k = 0; k < 4; ++k) raw[4 * i + k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace

std::uint64_t cube_record_bytes(const HyperCube& cube) {
  return 16 + 4ull * cube.bands + 4ull * cube.height * cube.width * cube.bands;
}

HyperCube read_cube(std::istream& in, bool expect_eof) {
  const auto magic = binary::read_magic(in);
  if (!magic) throw CubeFormatError(CubeFormatErrorKind::kTruncated, "file ends before the HKC1 magic");
  if (*magic != kCubeMagic) {
    throw CubeFormatError(CubeFormatErrorKind::kBadMagic, "bad magic '" + *magic + "', expected HKC1");
  }
  const auto h = binary::read_u32(in);
  const auto w = binary::read_u32(in);
  const auto c = binary::read_u32(in);
  if (!h || !w || !c) throw CubeFormatError(CubeFormatErrorKind::kTruncated, "header truncated");
  if (*h == 0 || *w == 0 || *c == 0) {
    throw CubeFormatError(CubeFormatErrorKind::kDimensionMismatch, "header declares a zero extent");
  }
  const std::uint64_t samples = static_cast<std::uint64_t>(*h) * *w * *c;
  if (samples > (std::uint64_t{1} << 34)) {
    throw CubeFormatError(CubeFormatErrorKind::kDimensionMismatch, "header declares an implausible size");
  }

  HyperCube cube;
  cube.height = *h;
  cube.width = *w;
  cube.bands = *c;
  if (!read_f32_block(in, cube.wavelengths_nm, cube.bands)) {
    throw CubeFormatError(CubeFormatErrorKind::kTruncated, "wavelength table truncated");
  }
  if (!read_f32_block(in, cube.data, static_cast<std::size_t>(samples))) {
    throw CubeFormatError(CubeFormatErrorKind::kTruncated,
                          "payload truncated: expected " + std::to_string(samples) + " samples");
  }
  if (expect_eof && in.peek() != std::char_traits<char>::eof()) {
    throw CubeFormatError(CubeFormatErrorKind::kDimensionMismatch,
                          "payload longer than the declared " + std::to_string(*h) + "x" +
                              std::to_string(*w) + "x" + std::to_string(*c));
  }
  for (std::size_t b = 1; b < cube.bands; ++b) {
    if (!(cube.wavelengths_nm[b] > cube.wavelengths_nm[b - 1])) {
      throw CubeFormatError(CubeFormatErrorKind::kNonIncreasingWavelengths,
                            "wavelengths not strictly increasing at band " + std::to_string(b));
    }
  }
  for (float v : cube.data) {
    if (!std::isfinite(v)) throw CubeFormatError(CubeFormatErrorKind::kNonFiniteSample, "non-finite sample");
  }
  return cube;
}

void write_cube(const HyperCube& cube, std::ostream& out) {
  validate(cube);
  binary::write_magic(out, kCubeMagic);
  binary::write_u32(out, checked_u32(cube.height, "height"));
  binary::write_u32(out, checked_u32(cube.width, "width"));
  binary::write_u32(out, checked_u32(cube.bands, "bands"));
  write_f32_block(out, cube.wavelengths_nm);
  write_f32_block(out, cube.data);
}

HyperCube load_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open cube file " + path.string());
  return read_cube(in, /*expect_eof=*/true);
}

void save_cube(const HyperCube& cube, const std::filesystem::path& path) {
  validate(cube);  // reject before touching the filesystem
  write_atomically(path, [&](std::ostream& out) { write_cube(cube, out); });
}

LabelRaster load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open label file " + path.string());
  const auto magic = binary::read_magic(in);
  if (!magic) throw CubeFormatError(CubeFormatErrorKind::kTruncated, "label file ends before magic");
  if (*magic != kLabelMagic) {
    throw CubeFormatError(CubeFormatErrorKind::kBadMagic, "bad magic '" + *magic + "', expected HKL1");
  }
  const auto h = binary::read_u32(in);
  const auto w = binary::read_u32(in);
  if (!h || !w) throw CubeFormatError(CubeFormatErrorKind::kTruncated, "label header truncated");
  LabelRaster raster;
  raster.height = *h;
  raster.width = *w;
  raster.labels.resize(raster.height * raster.width);
  for (auto& l : raster.labels) {
    const auto v = binary::read_u16(in);
    if (!v) throw CubeFormatError(CubeFormatErrorKind::kTruncated, "label payload truncated");
    l = *v;
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CubeFormatError(CubeFormatErrorKind::kDimensionMismatch, "label payload longer than header");
  }
  return raster;
}

void save_labels(const LabelRaster& labels, const std::filesystem::path& path) {
  if (labels.labels.size() != labels.height * labels.width) {
    throw ValidationError("label raster length does not equal height*width");
  }
  write_atomically(path, [&](std::ostream& out) {
    binary::write_magic(out, kLabelMagic);
    binary::write_u32(out, checked_u32(labels.height, "height"));
    binary::write_u32(out, checked_u32(labels.width, "width"));
    for (auto l : labels.labels) binary::write_u16(out, l);
  });
}

}  // namespace hscl::hsi
