#include "hscl/contrastive/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "hscl/error.hpp"
#include "hscl/hsi/synth.hpp"

namespace hscl::contrastive {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(what) + " probability must lie in [0,1]");
}

struct Dims {
  std::size_t c, s;
};

Dims dims_of(const nn::Tensor& t) {
  if (t.rank() != 3 || t.extent(1) != t.extent(2)) {
    throw ValidationError("augment expects a square [C,S,S] patch, got " + nn::to_string(t.shape()));
  }
  return {t.extent(0), t.extent(1)};
}

bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

// dst(y, x) = src(map(y, x)) for every band.
template <class Map>
nn::Tensor remap(const nn::Tensor& src, Map map) {
  const auto [c, s] = dims_of(src);
  nn::Tensor out(src.shape());
  for (std::size_t b = 0; b < c; ++b) {
    const float* in = src.data() + b * s * s;
    float* o = out.data() + b * s * s;
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const auto [sy, sx] = map(y, x);
        o[y * s + x] = in[sy * s + sx];
      }
  }
  return out;
}

struct Applier {
  nn::Tensor& t;
  Rng& rng;

  void operator()(const HorizontalFlip& op) {
    if (!coin(rng, op.p)) return;
    const std::size_t s = t.extent(2);
    t = remap(t, [s](std::size_t y, std::size_t x) { return std::pair{y, s - 1 - x}; });
  }
  void operator()(const VerticalFlip& op) {
    if (!coin(rng, op.p)) return;
    const std::size_t s = t.extent(1);
    t = remap(t, [s](std::size_t y, std::size_t x) { return std::pair{s - 1 - y, x}; });
  }
  void operator()(const Rotate90& op) {
    if (!coin(rng, op.p)) return;
    const int turns = std::uniform_int_distribution<int>(1, 3)(rng);
    const std::size_t s = t.extent(1);
    for (int i = 0; i < turns; ++i) {
      // Counter-clockwise quarter turn.
      t = remap(t, [s](std::size_t y, std::size_t x) { return std::pair{x, s - 1 - y}; });
    }
  }
  void operator()(const CropResize& op) {
    if (!coin(rng, op.p)) return;
    const auto [c, s] = dims_of(t);
    const double scale = std::uniform_real_distribution<double>(op.min_scale, op.max_scale)(rng);
    const auto side = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(std::sqrt(scale) * static_cast<double>(s))), 1, s);
    const auto y0 = std::uniform_int_distribution<std::size_t>(0, s - side)(rng);
    const auto x0 = std::uniform_int_distribution<std::size_t>(0, s - side)(rng);
    if (side == s) return;
    // Pixel-centre aligned bilinear resampling of the crop onto S x S.
    const double f = static_cast<double>(side) / static_cast<double>(s);
    std::vector<std::size_t> lo(s), hi(s);
    std::vector<double> frac(s);
    for (std::size_t i = 0; i < s; ++i) {
      double u = (static_cast<double>(i) + 0.5) * f - 0.5;
      u = std::clamp(u, 0.0, static_cast<double>(side - 1));
      lo[i] = static_cast<std::size_t>(std::floor(u));
      hi[i] = std::min(lo[i] + 1, side - 1);
      frac[i] = u - static_cast<double>(lo[i]);
    }
    nn::Tensor out(t.shape());
    for (std::size_t b = 0; b < c; ++b) {
      const float* in = t.data() + b * s * s;
      float* o = out.data() + b * s * s;
      for (std::size_t y = 0; y < s; ++y) {
        const float* r0 = in + (y0 + lo[y]) * s + x0;
        const float* r1 = in + (y0 + hi[y]) * s + x0;
        const double fy = frac[y];
        for (std::size_t x = 0; x < s; ++x) {
          const double fx = frac[x];
          const double top = r0[lo[x]] * (1.0 - fx) + r0[hi[x]] * fx;
          const double bottom = r1[lo[x]] * (1.0 - fx) + r1[hi[x]] * fx;
          o[y * s + x] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
        }
      }
    }
    t = std::move(out);
  }
  void operator()(const SpectralNoise& op) {
    if (op.sigma == 0.0) return;
    std::normal_distribution<double> n(0.0, op.sigma);
    for (auto& v : t.values()) v = static_cast<float>(v + n(rng));
  }
  void operator()(const BandDropout& op) {
    const auto [c, s] = dims_of(t);
    for (std::size_t b = 0; b < c; ++b) {
      if (!coin(rng, op.p)) continue;
      std::fill(t.data() + b * s * s, t.data() + (b + 1) * s * s, 0.0f);
    }
  }
  void operator()(const Brightness& op) {
    const double gain = std::uniform_real_distribution<double>(op.min_gain, op.max_gain)(rng);
    for (auto& v : t.values()) v = static_cast<float>(v * gain);
  }
  void operator()(const Continuum& op) {
    const auto [c, s] = dims_of(t);
    const auto curve = hsi::legendre_mix(rng, c, op.degree, op.amplitude);
    for (std::size_t b = 0; b < c; ++b) {
      float* plane = t.data() + b * s * s;
      for (std::size_t i = 0; i < s * s; ++i) plane[i] = static_cast<float>(plane[i] + curve[b]);
    }
  }
  void operator()(const Offset& op) {
    const double shift = std::uniform_real_distribution<double>(op.min_offset, op.max_offset)(rng);
    for (auto& v : t.values()) v = static_cast<float>(v + shift);
  }
};

}  // namespace

void AugmentationSpec::validate() const {
  for (const auto& op : ops) {
    std::visit(
        [](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, CropResize>) {
            if (!(o.min_scale > 0.0 && o.min_scale <= o.max_scale && o.max_scale <= 1.0)) {
              throw ValidationError("crop scale range must satisfy 0 < min <= max <= 1");
            }
            check_probability(o.p, "crop");
          } else if constexpr (std::is_same_v<T, SpectralNoise>) {
            if (!(o.sigma >= 0.0) || !std::isfinite(o.sigma)) throw ValidationError("noise sigma must be >= 0");
          } else if constexpr (std::is_same_v<T, Brightness>) {
            if (!(o.min_gain > 0.0 && o.min_gain <= o.max_gain) || !std::isfinite(o.max_gain)) {
              throw ValidationError("brightness gains must satisfy 0 < min <= max");
            }
          } else if constexpr (std::is_same_v<T, Continuum>) {
            if (!(o.amplitude >= 0.0) || !std::isfinite(o.amplitude)) {
              throw ValidationError("continuum amplitude must be >= 0");
            }
          } else if constexpr (std::is_same_v<T, Offset>) {
            if (!(o.min_offset <= o.max_offset) || !std::isfinite(o.min_offset) || !std::isfinite(o.max_offset)) {
              throw ValidationError("offset range must satisfy min <= max");
            }
          } else {
            check_probability(o.p, "augmentation");
          }
        },
        op);
  }
}

AugmentationSpec AugmentationSpec::standard() {
  AugmentationSpec spec;
  spec.ops = {HorizontalFlip{0.5}, VerticalFlip{0.5}, Rotate90{0.5}, CropResize{0.3, 1.0, 1.0},
              Brightness{0.8, 1.2}, SpectralNoise{0.01}};
  return spec;
}

std::string to_string(const AugmentationSpec& spec) {
  struct Describe {
    std::string operator()(const HorizontalFlip& o) const { return "hflip(p=" + num(o.p) + ")"; }
    std::string operator()(const VerticalFlip& o) const { return "vflip(p=" + num(o.p) + ")"; }
    std::string operator()(const Rotate90& o) const { return "rot90(p=" + num(o.p) + ")"; }
    std::string operator()(const CropResize& o) const {
      return "crop(" + num(o.min_scale) + ".." + num(o.max_scale) + ",p=" + num(o.p) + ")";
    }
    std::string operator()(const SpectralNoise& o) const { return "noise(sigma=" + num(o.sigma) + ")"; }
    std::string operator()(const BandDropout& o) const { return "band_dropout(p=" + num(o.p) + ")"; }
    std::string operator()(const Brightness& o) const {
      return "brightness(" + num(o.min_gain) + ".." + num(o.max_gain) + ")";
    }
    std::string operator()(const Offset& o) const {
      return "offset(" + num(o.min_offset) + ".." + num(o.max_offset) + ")";
    }
    std::string operator()(const Continuum& o) const {
      return "continuum(amplitude=" + num(o.amplitude) + ",degree=" + std::to_string(o.degree) + ")";
    }
    static std::string num(double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", v);
      return buf;
    }
  };
  std::string out;
  for (const auto& op : spec.ops) out += (out.empty() ? "" : ";") + std::visit(Describe{}, op);
  return out + (out.empty() ? "" : ";") + "seed=" + std::to_string(spec.seed);
}

Rng view_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t step, std::uint64_t view) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ epoch);
  h = splitmix(h ^ step);
  h = splitmix(h ^ view);
  return Rng(h);
}

nn::Tensor augment(const nn::Tensor& patch, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  (void)dims_of(patch);
  nn::Tensor out(patch.shape(), std::vector<float>(patch.values().begin(), patch.values().end()));
  Applier apply{out, rng};
  for (const auto& op : spec.ops) std::visit(apply, op);
  return out;
}

hsi::Patch augment(const hsi::Patch& patch, const AugmentationSpec& spec, Rng& rng) {
  hsi::Patch out = patch;
  auto t = augment(to_tensor(patch.data), spec, rng);
  std::copy(t.values().begin(), t.values().end(), out.data.data.begin());
  return out;
}

nn::Tensor to_tensor(const hsi::HyperCube& cube) {
  return nn::Tensor({cube.bands, cube.height, cube.width}, cube.data);
}

nn::Tensor select_bands(const nn::Tensor& x, const hsi::BandSelector& selector) {
  if (x.rank() != 3) throw ValidationError("select_bands expects [C,H,W], got " + nn::to_string(x.shape()));
  hsi::Patch patch;
  patch.data = hsi::HyperCube(x.extent(1), x.extent(2), x.extent(0));
  std::copy(x.values().begin(), x.values().end(), patch.data.data.begin());
  return to_tensor(hsi::select_bands(patch, selector).data);
}

}  // namespace hscl::contrastive
