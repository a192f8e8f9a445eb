#include "hscl/metrics/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hscl/error.hpp"

namespace hscl::metrics {
namespace {

void check_shapes(const hsi::HyperCube& ref, const hsi::HyperCube& est) {
  if (ref.height != est.height || ref.width != est.width || ref.bands != est.bands) {
    throw ValidationError("shape mismatch: reference " + std::to_string(ref.height) + "x" + std::to_string(ref.width) +
                          "x" + std::to_string(ref.bands) + ", estimate " + std::to_string(est.height) + "x" +
                          std::to_string(est.width) + "x" + std::to_string(est.bands));
  }
  if (ref.data.empty()) throw ValidationError("cubes are empty");
}

double mse(const hsi::HyperCube& ref, const hsi::HyperCube& est) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double d = static_cast<double>(ref.data[i]) - est.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(ref.data.size());
}

}  // namespace

double rmse(const hsi::HyperCube& ref, const hsi::HyperCube& est) {
  check_shapes(ref, est);
  return std::sqrt(mse(ref, est));
}

double psnr(const hsi::HyperCube& ref, const hsi::HyperCube& est, double peak) {
  check_shapes(ref, est);
  if (!(peak > 0.0) || !std::isfinite(peak)) throw ValidationError("psnr peak must be positive");
  const double m = mse(ref, est);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

double sam(const hsi::HyperCube& ref, const hsi::HyperCube& est) {
  check_shapes(ref, est);
  const std::size_t npx = ref.pixel_count();
  double total = 0.0;
  for (std::size_t p = 0; p < npx; ++p) {
    double nr = 0.0, ne = 0.0;
    for (std::size_t b = 0; b < ref.bands; ++b) {
      const double r = ref.data[b * npx + p];
      const double e = est.data[b * npx + p];
      nr += r * r;
      ne += e * e;
    }
    if (nr == 0.0) {
      throw ValidationError("reference spectrum at pixel " + std::to_string(p) + " has zero norm");
    }
    if (ne == 0.0) {
      total += 90.0;
      continue;
    }
    // Half-angle form: exact 0 for identical spectra, no acos cancellation.
    nr = std::sqrt(nr);
    ne = std::sqrt(ne);
    double diff = 0.0, sum = 0.0;
    for (std::size_t b = 0; b < ref.bands; ++b) {
      const double r = ref.data[b * npx + p] / nr;
      const double e = est.data[b * npx + p] / ne;
      diff += (r - e) * (r - e);
      sum += (r + e) * (r + e);
    }
    total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
  }
  return total / static_cast<double>(npx);
}

CcResult cc(const hsi::HyperCube& ref, const hsi::HyperCube& est) {
  check_shapes(ref, est);
  const std::size_t npx = ref.pixel_count();
  CcResult out;
  double sum = 0.0;
  for (std::size_t b = 0; b < ref.bands; ++b) {
    const auto r = ref.band(b);
    const auto e = est.band(b);
    double mr = 0.0, me = 0.0;
    for (std::size_t i = 0; i < npx; ++i) {
      mr += r[i];
      me += e[i];
    }
    mr /= static_cast<double>(npx);
    me /= static_cast<double>(npx);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < npx; ++i) {
      const double dr = r[i] - mr;
      const double de = e[i] - me;
      sxy += dr * de;
      sxx += dr * dr;
      syy += de * de;
    }
    if (sxx == 0.0) throw ValidationError("reference band " + std::to_string(b) + " is constant");
    if (syy == 0.0) {
      out.constant_estimate_bands.push_back(b);
      continue;
    }
    sum += sxy / (std::sqrt(sxx) * std::sqrt(syy));
  }
  out.value = sum / static_cast<double>(ref.bands);
  return out;
}

double ergas(const hsi::HyperCube& ref, const hsi::HyperCube& est, double ratio) {
  check_shapes(ref, est);
  if (!(ratio > 0.0) || !(ratio <= 1.0)) throw ValidationError("ergas ratio must lie in (0, 1]");
  const std::size_t npx = ref.pixel_count();
  double acc = 0.0;
  for (std::size_t b = 0; b < ref.bands; ++b) {
    const auto r = ref.band(b);
    const auto e = est.band(b);
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < npx; ++i) {
      mean += r[i];
      const double d = static_cast<double>(r[i]) - e[i];
      sq += d * d;
    }
    mean /= static_cast<double>(npx);
    if (mean == 0.0) throw ValidationError("reference band " + std::to_string(b) + " has zero mean");
    const double rmse_b = std::sqrt(sq / static_cast<double>(npx));
    acc += (rmse_b / mean) * (rmse_b / mean);
  }
  return 100.0 * ratio * std::sqrt(acc / static_cast<double>(ref.bands));
}

}  // namespace hscl::metrics
