#pragma once

// Little-endian primitive encoding shared by the cube, label, archive and
// checkpoint formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace hscl::binary {

inline void write_u16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void write_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), 4); }

// Readers return nullopt when the stream runs dry.
inline std::optional<std::uint16_t> read_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) return std::nullopt;
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::optional<std::uint32_t> read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return std::nullopt;
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::optional<std::uint64_t> read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return std::nullopt;
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::optional<float> read_f32(std::istream& in) {
  auto bits = read_u32(in);
  if (!bits) return std::nullopt;
  return std::bit_cast<float>(*bits);
}

inline std::optional<std::string> read_magic(std::istream& in) {
  std::string m(4, '\0');
  if (!in.read(m.data(), 4)) return std::nullopt;
  return m;
}

}  // namespace hscl::binary
