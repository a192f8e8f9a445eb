#include "hscl/pipelines/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include "json.hpp"

#include "hscl/error.hpp"
#include "hscl/hsi/io.hpp"

namespace hscl::pipelines {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw RuntimeError("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1) {
      throw RuntimeError("sha256 update failed");
    }
  }
  if (!in.eof()) throw RuntimeError("read failed while hashing " + path.string());
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw RuntimeError("sha256 final failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    char b[3];
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), sha256_file(path), std::filesystem::file_size(path)});
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["toolkit"] = "hscl";
  j["version"] = kToolkitVersion;
  j["command"] = command;
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  auto& in = j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& d : inputs) in.push_back({{"path", d.path}, {"sha256", d.sha256}, {"bytes", d.bytes}});
  j["outputs"] = outputs;
  auto& t = j["timings_s"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : timings_s) t[k] = v;
  return j.dump(2) + "\n";
}

void RunManifest::save(const std::filesystem::path& path) const {
  const auto text = to_json();
  hsi::write_atomically(path, [&](std::ostream& out) { out << text; });
}

}  // namespace hscl::pipelines
