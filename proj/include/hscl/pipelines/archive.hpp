#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "hscl/hsi/cube.hpp"

namespace hscl::pipelines {

// Patch archive: the patches' HKC1 records back to back, then an index
//   "HKPI", u32 count,
//   per patch: u64 record offset, u32 row, u32 col, u16 label, u16 0,
//              u32 id length, id bytes
// and a trailer of u64 index offset, "HKPE". Little-endian throughout.
void write_archive(std::span<const hsi::Patch> patches, std::ostream& out);
std::vector<hsi::Patch> read_archive(std::istream& in);

// Atomic file forms.
void save_archive(std::span<const hsi::Patch> patches, const std::filesystem::path& path);
std::vector<hsi::Patch> load_archive(const std::filesystem::path& path);

}  // namespace hscl::pipelines
