#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hscl::pipelines {

inline constexpr const char* kToolkitVersion = "0.3.0";

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct InputDigest {
  std::string path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // resolved, in declaration order
  std::vector<InputDigest> inputs;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings_s;

  void add_input(const std::filesystem::path& path);
  std::string to_json() const;
  // Written atomically.
  void save(const std::filesystem::path& path) const;
};

}  // namespace hscl::pipelines
