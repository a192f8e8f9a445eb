#include "hscl/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "hscl/binary_io.hpp"
#include "hscl/error.hpp"
#include "hscl/hsi/io.hpp"

namespace hscl::nn {
namespace {

constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

template <class T>
T need(std::optional<T> v, const char* what) {
  if (!v) throw RuntimeError(std::string("checkpoint truncated while reading ") + what);
  return *v;
}

}  // namespace

void write_parameters(const ParameterSet& params, std::ostream& out) {
  binary::write_magic(out, "HKW1");
  binary::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) throw ValidationError("parameter '" + name + "' holds non-finite values");
    binary::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) binary::write_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.values()) binary::write_f32(out, v);
  }
}

ParameterSet read_parameters(std::istream& in) {
  auto magic = binary::read_magic(in);
  if (!magic || *magic != "HKW1") throw RuntimeError("not a parameter checkpoint (bad magic)");
  const std::uint32_t count = need(binary::read_u32(in), "tensor count");
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = need(binary::read_u32(in), "name length");
    if (len == 0 || len > kMaxNameLength) throw RuntimeError("checkpoint tensor name length out of range");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw RuntimeError("checkpoint truncated while reading a name");
    const std::uint32_t rank = need(binary::read_u32(in), "rank");
    if (rank > kMaxRank) throw RuntimeError("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(need(binary::read_u32(in), "extent"));
    Tensor t(shape);
    for (auto& v : t.values()) v = need(binary::read_f32(in), "values");
    if (!t.all_finite()) throw RuntimeError("checkpoint tensor '" + name + "' holds non-finite values");
    params.add(name, std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw RuntimeError("trailing bytes after checkpoint payload");
  return params;
}

void save_parameters(const ParameterSet& params, const std::filesystem::path& path) {
  hsi::write_atomically(path, [&](std::ostream& out) { write_parameters(params, out); });
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint " + path.string());
  return read_parameters(in);
}

void save_config(const BackboneConfig& config, const std::filesystem::path& path) {
  config.validate();
  hsi::write_atomically(path, [&](std::ostream& out) { out << config.to_text(); });
}

BackboneConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open backbone config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return BackboneConfig::from_text(ss.str());
}

}  // namespace hscl::nn
