#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "hscl/nn/gradcheck.hpp"
#include "hscl/nn/ops.hpp"

namespace test_support {

template <class Real = double>
hscl::nn::BasicTensor<Real> random_tensor(hscl::nn::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                          double hi = 1.0) {
  hscl::nn::BasicTensor<Real> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<Real>(u(rng));
  return t;
}

// Smooth scalar loss with a non-trivial upstream gradient: mse(y, target).
inline hscl::nn::Var<double> mse_to(hscl::nn::Tape<double>& t, hscl::nn::Var<double> y,
                                    const hscl::nn::BasicTensor<double>& target) {
  return hscl::nn::mean_squared_error(y, t.leaf(target, false));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("hscl_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace test_support
