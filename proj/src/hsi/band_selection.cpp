#include "hscl/hsi/band_selection.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "hscl/error.hpp"
#include "hscl/hsi/jacobi.hpp"

namespace hscl::hsi {

double PcaBands::explained_variance_ratio(std::size_t k) const {
  double total = 0.0;
  for (double v : eigenvalues) total += std::max(v, 0.0);
  if (total <= 0.0) return 0.0;
  double head = 0.0;
  for (std::size_t i = 0; i < std::min(k, eigenvalues.size()); ++i) head += std::max(eigenvalues[i], 0.0);
  return head / total;
}

BandSelector BandSelector::manual(std::vector<std::size_t> indices, std::size_t input_bands) {
  if (indices.empty()) throw ValidationError("manual band list is empty");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= input_bands) {
      throw ValidationError("manual band index " + std::to_string(indices[i]) + " out of range for " +
                            std::to_string(input_bands) + " bands");
    }
    if (i > 0 && indices[i] <= indices[i - 1]) throw ValidationError("manual band indices must be strictly increasing");
  }
  BandSelector s(ManualBands{std::move(indices)});
  s.manual_input_bands_ = input_bands;
  return s;
}

BandSelector BandSelector::pca(PcaBands fitted) {
  if (fitted.components == 0 || fitted.components > fitted.input_bands) {
    throw ValidationError("PCA component count must lie in [1, input bands]");
  }
  if (fitted.mean.size() != fitted.input_bands || fitted.basis.size() != fitted.input_bands * fitted.components) {
    throw ValidationError("PCA mean/basis shapes are inconsistent");
  }
  return BandSelector(std::move(fitted));
}

std::size_t BandSelector::output_bands(std::size_t input_bands) const {
  return std::visit(
      [&](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FullBands>) return input_bands;
        else if constexpr (std::is_same_v<T, ManualBands>) return m.indices.size();
        else return m.components;
      },
      mode_);
}

void BandSelector::check_input(std::size_t input_bands) const {
  if (const auto* m = std::get_if<ManualBands>(&mode_)) {
    if (manual_input_bands_ != 0 && manual_input_bands_ != input_bands) {
      throw ValidationError("band selector expects " + std::to_string(manual_input_bands_) + " channels, patch has " +
                            std::to_string(input_bands));
    }
    if (m->indices.back() >= input_bands) throw ValidationError("manual band index out of range");
  } else if (const auto* p = std::get_if<PcaBands>(&mode_)) {
    if (p->input_bands != input_bands) {
      throw ValidationError("PCA selector fitted on " + std::to_string(p->input_bands) + " channels, patch has " +
                            std::to_string(input_bands));
    }
  }
}

PcaBands fit_pca(std::span<const Patch> patches, const PcaOptions& options) {
  if (patches.empty()) throw ValidationError("fit_pca needs at least one patch");
  const std::size_t c = patches.front().bands();
  if (options.components == 0 || options.components > c) {
    throw ValidationError("PCA component count " + std::to_string(options.components) + " must lie in [1, " +
                          std::to_string(c) + "]");
  }
  // (patch index, pixel index) pairs in input order.
  std::vector<std::pair<std::size_t, std::size_t>> pixels;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].bands() != c) throw ValidationError("patches disagree on band count");
    for (std::size_t px = 0; px < patches[i].data.pixel_count(); ++px) pixels.emplace_back(i, px);
  }
  if (options.max_pixels != 0 && pixels.size() > options.max_pixels) {
    std::mt19937_64 rng(options.seed);
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    std::sample(pixels.begin(), pixels.end(), std::back_inserter(chosen), options.max_pixels, rng);
    pixels = std::move(chosen);
  }
  if (pixels.size() < 2) throw ValidationError("fit_pca needs at least two spectra");

  PcaBands out;
  out.input_bands = c;
  out.components = options.components;
  out.mean.assign(c, 0.0);
  for (const auto& [i, px] : pixels) {
    const auto& cube = patches[i].data;
    for (std::size_t b = 0; b < c; ++b) out.mean[b] += cube.data[b * cube.pixel_count() + px];
  }
  for (auto& m : out.mean) m /= static_cast<double>(pixels.size());

  std::vector<double> cov(c * c, 0.0);
  std::vector<double> centered(c);
  for (const auto& [i, px] : pixels) {
    const auto& cube = patches[i].data;
    for (std::size_t b = 0; b < c; ++b) centered[b] = cube.data[b * cube.pixel_count() + px] - out.mean[b];
    for (std::size_t p = 0; p < c; ++p) {
      const double cp = centered[p];
      for (std::size_t q = p; q < c; ++q) cov[p * c + q] += cp * centered[q];
    }
  }
  const double denom = static_cast<double>(pixels.size() - 1);
  for (std::size_t p = 0; p < c; ++p) {
    for (std::size_t q = p; q < c; ++q) {
      cov[p * c + q] /= denom;
      cov[q * c + p] = cov[p * c + q];
    }
  }

  const bool zero_cov = std::all_of(cov.begin(), cov.end(), [](double v) { return v == 0.0; });
  out.basis.assign(c * out.components, 0.0);
  if (zero_cov) {
    out.degenerate = true;
    out.eigenvalues.assign(c, 0.0);
    for (std::size_t j = 0; j < out.components; ++j) out.basis[j * out.components + j] = 1.0;
    return out;
  }
  const SymmetricEigen eig = jacobi_eigen(std::move(cov), c);
  out.eigenvalues = eig.values;
  for (std::size_t b = 0; b < c; ++b)
    for (std::size_t j = 0; j < out.components; ++j) out.basis[b * out.components + j] = eig.vectors[b * c + j];
  return out;
}

Patch select_bands(const Patch& patch, const BandSelector& selector) {
  selector.check_input(patch.bands());
  if (selector.is_full()) return patch;
  Patch out = patch;
  const auto& src = patch.data;
  const std::size_t npx = src.pixel_count();
  if (const auto* m = std::get_if<ManualBands>(&selector.mode())) {
    out.data.bands = m->indices.size();
    out.data.data.resize(npx * out.data.bands);
    out.data.wavelengths_nm.resize(out.data.bands);
    for (std::size_t k = 0; k < m->indices.size(); ++k) {
      const auto band = src.band(m->indices[k]);
      std::copy(band.begin(), band.end(), out.data.data.begin() + static_cast<std::ptrdiff_t>(k * npx));
      out.data.wavelengths_nm[k] = src.wavelengths_nm[m->indices[k]];
    }
    return out;
  }
  const auto& pca = std::get<PcaBands>(selector.mode());
  const std::size_t k = pca.components;
  out.data.bands = k;
  out.data.data.assign(npx * k, 0.0f);
  // Component channels have no physical wavelength; they are tagged 1..k.
  out.data.wavelengths_nm.resize(k);
  for (std::size_t j = 0; j < k; ++j) out.data.wavelengths_nm[j] = static_cast<float>(j + 1);
  std::vector<double> acc(npx);
  for (std::size_t j = 0; j < k; ++j) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t b = 0; b < src.bands; ++b) {
      const double w = pca.basis_at(b, j);
      const double mu = pca.mean[b];
      const auto band = src.band(b);
      for (std::size_t px = 0; px < npx; ++px) acc[px] += (band[px] - mu) * w;
    }
    for (std::size_t px = 0; px < npx; ++px) out.data.data[j * npx + px] = static_cast<float>(acc[px]);
  }
  return out;
}

HyperCube pca_reconstruct(const HyperCube& scores, const PcaBands& pca) {
  if (scores.bands != pca.components) throw ValidationError("score cube channel count does not match PCA");
  HyperCube out(scores.height, scores.width, pca.input_bands);
  const std::size_t npx = scores.pixel_count();
  for (std::size_t b = 0; b < pca.input_bands; ++b) {
    for (std::size_t px = 0; px < npx; ++px) {
      double v = pca.mean[b];
      for (std::size_t j = 0; j < pca.components; ++j) v += pca.basis_at(b, j) * scores.data[j * npx + px];
      out.data[b * npx + px] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace hscl::hsi
