#pragma once

#include <filesystem>
#include <iosfwd>

#include "hscl/nn/backbone.hpp"
#include "hscl/nn/tensor.hpp"

namespace hscl::nn {

// HKW1: "HKW1", u32 count, then per tensor u32 name length, UTF-8 name,
// u32 rank, rank u32 extents, f32 values. Little-endian throughout.
void write_parameters(const ParameterSet& params, std::ostream& out);
ParameterSet read_parameters(std::istream& in);

void save_parameters(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_parameters(const std::filesystem::path& path);

void save_config(const BackboneConfig& config, const std::filesystem::path& path);
BackboneConfig load_config(const std::filesystem::path& path);

}  // namespace hscl::nn
