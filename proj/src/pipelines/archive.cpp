#include "hscl/pipelines/archive.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "hscl/binary_io.hpp"
#include "hscl/error.hpp"
#include "hscl/hsi/io.hpp"

namespace hscl::pipelines {
namespace {

constexpr std::uint64_t kTrailerBytes = 12;
constexpr std::uint32_t kMaxIdLength = 4096;

[[noreturn]] void corrupt(const std::string& what) { throw RuntimeError("corrupt patch archive: " + what); }

template <class T>
T need(std::optional<T> v, const char* what) {
  if (!v) corrupt(std::string("truncated ") + what);
  return *v;
}

}  // namespace

void write_archive(std::span<const hsi::Patch> patches, std::ostream& out) {
  std::vector<std::uint64_t> offsets;
  std::uint64_t offset = 0;
  for (const auto& p : patches) {
    if (p.source_row > UINT32_MAX || p.source_col > UINT32_MAX) throw ValidationError("patch origin exceeds 32 bits");
    if (p.source_cube_id.size() > kMaxIdLength) throw ValidationError("cube id longer than 4096 bytes");
    offsets.push_back(offset);
    hsi::write_cube(p.data, out);
    offset += hsi::cube_record_bytes(p.data);
  }
  binary::write_magic(out, "HKPI");
  binary::write_u32(out, static_cast<std::uint32_t>(patches.size()));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = patches[i];
    binary::write_u64(out, offsets[i]);
    binary::write_u32(out, static_cast<std::uint32_t>(p.source_row));
    binary::write_u32(out, static_cast<std::uint32_t>(p.source_col));
    binary::write_u16(out, p.label);
    binary::write_u16(out, 0);
    binary::write_u32(out, static_cast<std::uint32_t>(p.source_cube_id.size()));
    out.write(p.source_cube_id.data(), static_cast<std::streamsize>(p.source_cube_id.size()));
  }
  binary::write_u64(out, offset);
  binary::write_magic(out, "HKPE");
}

std::vector<hsi::Patch> read_archive(std::istream& in) {
  in.seekg(0, std::ios::end);
  const auto end = static_cast<std::uint64_t>(in.tellg());
  if (end < kTrailerBytes) corrupt("shorter than its trailer");
  in.seekg(static_cast<std::streamoff>(end - kTrailerBytes));
  const auto index_at = need(binary::read_u64(in), "trailer");
  if (need(binary::read_magic(in), "trailer") != "HKPE") corrupt("missing HKPE trailer");
  if (index_at > end - kTrailerBytes) corrupt("index offset past end of file");

  in.seekg(static_cast<std::streamoff>(index_at));
  if (need(binary::read_magic(in), "index") != "HKPI") corrupt("missing HKPI index");
  const auto count = need(binary::read_u32(in), "index");
  struct Entry {
    std::uint64_t offset;
    hsi::Patch meta;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.offset = need(binary::read_u64(in), "index entry");
    e.meta.source_row = need(binary::read_u32(in), "index entry");
    e.meta.source_col = need(binary::read_u32(in), "index entry");
    e.meta.label = need(binary::read_u16(in), "index entry");
    if (need(binary::read_u16(in), "index entry") != 0) corrupt("non-zero reserved field");
    const auto len = need(binary::read_u32(in), "index entry");
    if (len > kMaxIdLength) corrupt("cube id length " + std::to_string(len));
    e.meta.source_cube_id.resize(len);
    if (!in.read(e.meta.source_cube_id.data(), len)) corrupt("truncated cube id");
    entries.push_back(std::move(e));
  }
  if (static_cast<std::uint64_t>(in.tellg()) != end - kTrailerBytes) corrupt("index size disagrees with trailer");

  std::vector<hsi::Patch> patches;
  patches.reserve(entries.size());
  std::uint64_t expected = 0;
  for (auto& e : entries) {
    if (e.offset != expected) corrupt("record offset " + std::to_string(e.offset) + " expected " + std::to_string(expected));
    in.seekg(static_cast<std::streamoff>(e.offset));
    try {
      e.meta.data = hsi::read_cube(in);
    } catch (const hsi::CubeFormatError& err) {
      corrupt("record " + std::to_string(patches.size()) + ": " + err.what());
    }
    expected += hsi::cube_record_bytes(e.meta.data);
    if (expected > index_at) corrupt("record overruns the index");
    patches.push_back(std::move(e.meta));
  }
  if (expected != index_at) corrupt("bytes between the last record and the index");
  return patches;
}

void save_archive(std::span<const hsi::Patch> patches, const std::filesystem::path& path) {
  hsi::write_atomically(path, [&](std::ostream& out) { write_archive(patches, out); });
}

std::vector<hsi::Patch> load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open patch archive " + path.string());
  return read_archive(in);
}

}  // namespace hscl::pipelines
