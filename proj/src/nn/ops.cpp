#include "hscl/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace hscl::nn {
namespace {

// Reductions over spatial positions accumulate in double regardless of Real.
using Acc = double;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

template <class Real>
Tape<Real>& tape_of(Var<Real> a) {
  require(a.tape != nullptr, "variable is not attached to a tape");
  return *a.tape;
}

template <class Real>
void same_tape(Var<Real> a, Var<Real> b) {
  require(a.tape == b.tape, "variables belong to different tapes");
}

// Output indices o in [lo, hi) whose input index o*stride + k - pad lies in
// [0, in).
struct Range {
  std::size_t lo, hi;
};
Range valid_range(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, std::size_t in) {
  const long long s = static_cast<long long>(stride);
  const long long off = static_cast<long long>(k) - static_cast<long long>(pad);
  long long lo = 0;
  if (off < 0) lo = (-off + s - 1) / s;
  long long hi_incl = (static_cast<long long>(in) - 1 - off);
  long long hi = hi_incl < 0 ? 0 : hi_incl / s + 1;
  hi = std::min<long long>(hi, static_cast<long long>(out));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <class Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Signed input coordinate of output o at kernel tap kk, or -1 if padded.
inline long long tap(std::size_t o, std::size_t kk, std::size_t stride, std::size_t pad, std::size_t in) {
  const long long v = static_cast<long long>(o * stride + kk) - static_cast<long long>(pad);
  return (v < 0 || v >= static_cast<long long>(in)) ? -1 : v;
}

template <class Real>
void im2col(const Real* x, std::size_t h, std::size_t w, std::size_t c0, std::size_t channels, std::size_t k,
            std::size_t s, std::size_t p, std::size_t ho, std::size_t wo, Real* cols) {
  const std::size_t r = channels * k * k;
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      Real* row = cols + (oy * wo + ox) * r;
      for (std::size_t c = 0; c < channels; ++c) {
        const Real* plane = x + (c0 + c) * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long long iy = tap(oy, ky, s, p, h);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long long ix = tap(ox, kx, s, p, w);
            *row++ = (iy < 0 || ix < 0) ? Real(0) : plane[iy * static_cast<long long>(w) + ix];
          }
        }
      }
    }
}

template <class Real>
void col2im(const Real* cols, std::size_t h, std::size_t w, std::size_t c0, std::size_t channels, std::size_t k,
            std::size_t s, std::size_t p, std::size_t ho, std::size_t wo, Real* gx) {
  const std::size_t r = channels * k * k;
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const Real* row = cols + (oy * wo + ox) * r;
      for (std::size_t c = 0; c < channels; ++c) {
        Real* plane = gx + (c0 + c) * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long long iy = tap(oy, ky, s, p, h);
          for (std::size_t kx = 0; kx < k; ++kx, ++row) {
            const long long ix = tap(ox, kx, s, p, w);
            if (iy >= 0 && ix >= 0) plane[iy * static_cast<long long>(w) + ix] += *row;
          }
        }
      }
    }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(stride >= 1, "stride must be at least 1");
  const long long span = static_cast<long long>(in) + 2 * static_cast<long long>(pad) - static_cast<long long>(kernel);
  require(span >= 0, "kernel larger than padded input");
  require(span % static_cast<long long>(stride) == 0,
          "output extent (" + std::to_string(in) + "+2*" + std::to_string(pad) + "-" + std::to_string(kernel) + ")/" +
              std::to_string(stride) + " is not integral");
  return static_cast<std::size_t>(span / static_cast<long long>(stride)) + 1;
}

// ---------------------------------------------------------------- conv2d

template <class Real>
Var<Real> conv2d(Var<Real> input, Var<Real> kernels, OptionalVar<Real> bias, const Conv2dOptions& opt) {
  auto& t = tape_of(input);
  same_tape(input, kernels);
  const auto& x = input.value();
  const auto& k = kernels.value();
  require(x.rank() == 3, "conv2d input must be [C,H,W], got " + to_string(x.shape()));
  require(k.rank() == 4, "conv2d kernels must be [Co,Ci/g,k,k], got " + to_string(k.shape()));
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t cout = k.extent(0), ipg = k.extent(1), kh = k.extent(2), kw = k.extent(3);
  const std::size_t g = opt.groups;
  require(g >= 1 && cin % g == 0, "conv2d: input channels " + std::to_string(cin) + " not divisible by groups " +
                                       std::to_string(g));
  require(cout % g == 0, "conv2d: output channels not divisible by groups");
  require(ipg == cin / g, "conv2d: kernel expects " + std::to_string(ipg) + " channels per group, input has " +
                              std::to_string(cin / g));
  require(kh == kw && kh % 2 == 1, "conv2d: kernel must be square with odd extent");
  if (bias) {
    same_tape(input, *bias);
    require(bias->value().size() == cout, "conv2d: bias length must equal output channels");
  }
  const std::size_t ho = conv_output_extent(h, kh, opt.stride, opt.pad);
  const std::size_t wo = conv_output_extent(w, kw, opt.stride, opt.pad);
  const std::size_t opg = cout / g, s = opt.stride, p = opt.pad;

  const std::size_t pix = ho * wo, r = ipg * kh * kw;

  // One column block per group: cols[grp][pixel][(icl*k + ky)*k + kx], zero
  // where the window hangs over the padding. Kept for the backward pass.
  auto cols = std::make_shared<std::vector<Real>>(g * pix * r, Real(0));
  for (std::size_t grp = 0; grp < g; ++grp) im2col(x.data(), h, w, grp * ipg, ipg, kh, s, p, ho, wo,
                                                   cols->data() + grp * pix * r);

  BasicTensor<Real> out({cout, ho, wo});
  Real* o = out.data();
  const Real* kv = k.data();
  for (std::size_t oc = 0; oc < cout; ++oc) {
    const Real* krow = kv + oc * r;
    const Real* cblock = cols->data() + (oc / opg) * pix * r;
    const Real b = bias ? bias->value()[oc] : Real(0);
    for (std::size_t q = 0; q < pix; ++q) o[oc * pix + q] = b + dot(krow, cblock + q * r, r);
  }

  const std::size_t xi = input.id, ki = kernels.id;
  const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return t.record(std::move(out), {input, kernels, bias}, [=](Tape<Real>& tp, std::size_t self) {
    const Real* go = tp.grad_mut(self).data();
    const Real* kvv = tp.value(ki).data();
    if (bi && tp.requires_grad(*bi)) {
      auto gb = tp.grad_mut(*bi);
      for (std::size_t oc = 0; oc < cout; ++oc) {
        Acc acc = 0;
        for (std::size_t i = 0; i < pix; ++i) acc += go[oc * pix + i];
        gb[oc] += static_cast<Real>(acc);
      }
    }
    if (tp.requires_grad(ki)) {
      Real* gk = tp.grad_mut(ki).data();
      std::vector<Acc> acc(r);
      for (std::size_t oc = 0; oc < cout; ++oc) {
        const Real* cblock = cols->data() + (oc / opg) * pix * r;
        std::fill(acc.begin(), acc.end(), Acc(0));
        for (std::size_t q = 0; q < pix; ++q) {
          const Acc gq = go[oc * pix + q];
          if (gq == 0) continue;
          const Real* crow = cblock + q * r;
          for (std::size_t j = 0; j < r; ++j) acc[j] += gq * crow[j];
        }
        for (std::size_t j = 0; j < r; ++j) gk[oc * r + j] += static_cast<Real>(acc[j]);
      }
    }
    if (tp.requires_grad(xi)) {
      Real* gx = tp.grad_mut(xi).data();
      std::vector<Real> gcols(pix * r);
      for (std::size_t grp = 0; grp < g; ++grp) {
        std::fill(gcols.begin(), gcols.end(), Real(0));
        for (std::size_t oc = grp * opg; oc < (grp + 1) * opg; ++oc) {
          const Real* krow = kvv + oc * r;
          for (std::size_t q = 0; q < pix; ++q) {
            const Real gq = go[oc * pix + q];
            if (gq == 0) continue;
            Real* grow = gcols.data() + q * r;
            for (std::size_t j = 0; j < r; ++j) grow[j] += gq * krow[j];
          }
        }
        col2im(gcols.data(), h, w, grp * ipg, ipg, kh, s, p, ho, wo, gx);
      }
    }
  });
}

// ---------------------------------------------------------------- conv3d

template <class Real>
Var<Real> conv3d(Var<Real> input, Var<Real> kernels, OptionalVar<Real> bias, const Conv3dOptions& opt) {
  auto& t = tape_of(input);
  same_tape(input, kernels);
  const auto& x = input.value();
  const auto& k = kernels.value();
  require(x.rank() == 4 && x.extent(0) == 1, "conv3d input must be [1,C,H,W], got " + to_string(x.shape()));
  require(k.rank() == 5 && k.extent(1) == 1, "conv3d kernels must be [F,1,kc,kh,kw], got " + to_string(k.shape()));
  const std::size_t c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const std::size_t f = k.extent(0), kc = k.extent(2), kh = k.extent(3), kw = k.extent(4);
  require(kc % 2 == 1 && kh % 2 == 1 && kw % 2 == 1, "conv3d: kernel extents must be odd");
  if (bias) {
    same_tape(input, *bias);
    require(bias->value().size() == f, "conv3d: bias length must equal filter count");
  }
  const std::size_t co = conv_output_extent(c, kc, opt.spectral_stride, opt.spectral_pad);
  const std::size_t ho = conv_output_extent(h, kh, opt.spatial_stride, opt.spatial_pad);
  const std::size_t wo = conv_output_extent(w, kw, opt.spatial_stride, opt.spatial_pad);
  const std::size_t sc = opt.spectral_stride, ss = opt.spatial_stride;
  const std::size_t pc = opt.spectral_pad, ps = opt.spatial_pad;

  BasicTensor<Real> out({f, co, ho, wo});
  Real* o = out.data();
  const Real* xv = x.data();
  const Real* kv = k.data();
  // Visits every (filter, out band, in band, kernel offset) with the valid
  // spatial ranges; `body` works on whole rows.
  auto sweep = [&](auto&& body) {
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t dc = 0; dc < kc; ++dc) {
        const Range rc = valid_range(co, dc, sc, pc, c);
        for (std::size_t oc = rc.lo; oc < rc.hi; ++oc) {
          const std::size_t ic = oc * sc + dc - pc;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const Range ry = valid_range(ho, ky, ss, ps, h);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const Range rx = valid_range(wo, kx, ss, ps, w);
              const std::size_t kidx = ((fi * kc + dc) * kh + ky) * kw + kx;
              body(fi, oc, ic, ky, kx, kidx, ry, rx);
            }
          }
        }
      }
  };
  if (bias)
    for (std::size_t fi = 0; fi < f; ++fi)
      std::fill(o + fi * co * ho * wo, o + (fi + 1) * co * ho * wo, bias->value()[fi]);
  sweep([&](std::size_t fi, std::size_t oc, std::size_t ic, std::size_t ky, std::size_t kx, std::size_t kidx, Range ry,
            Range rx) {
    const Real wv = kv[kidx];
    for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
      const Real* irow = xv + (ic * h + oy * ss + ky - ps) * w;
      Real* orow = o + ((fi * co + oc) * ho + oy) * wo;
      for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * irow[ox * ss + kx - ps];
    }
  });

  const std::size_t xi = input.id, ki = kernels.id;
  const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return t.record(std::move(out), {input, kernels, bias}, [=](Tape<Real>& tp, std::size_t self) {
    const Real* go = tp.grad_mut(self).data();
    const Real* xval = tp.value(xi).data();
    const Real* kval = tp.value(ki).data();
    Real* gx = tp.requires_grad(xi) ? tp.grad_mut(xi).data() : nullptr;
    Real* gk = tp.requires_grad(ki) ? tp.grad_mut(ki).data() : nullptr;
    if (bi && tp.requires_grad(*bi)) {
      auto gb = tp.grad_mut(*bi);
      for (std::size_t fi = 0; fi < f; ++fi) {
        Acc acc = 0;
        for (std::size_t i = 0; i < co * ho * wo; ++i) acc += go[fi * co * ho * wo + i];
        gb[fi] += static_cast<Real>(acc);
      }
    }
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t dc = 0; dc < kc; ++dc) {
        const Range rc = valid_range(co, dc, sc, pc, c);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const Range ry = valid_range(ho, ky, ss, ps, h);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const Range rx = valid_range(wo, kx, ss, ps, w);
            const std::size_t kidx = ((fi * kc + dc) * kh + ky) * kw + kx;
            const Real wv = kval[kidx];
            Acc acc = 0;
            for (std::size_t oc = rc.lo; oc < rc.hi; ++oc) {
              const std::size_t ic = oc * sc + dc - pc;
              for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                const std::size_t in_row = (ic * h + oy * ss + ky - ps) * w;
                const Real* grow = go + ((fi * co + oc) * ho + oy) * wo;
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
                  const std::size_t ii = in_row + ox * ss + kx - ps;
                  if (gk) acc += static_cast<Acc>(grow[ox]) * xval[ii];
                  if (gx) gx[ii] += wv * grow[ox];
                }
              }
            }
            if (gk) gk[kidx] += static_cast<Real>(acc);
          }
        }
      }
  });
}

// ---------------------------------------------------------------- pooling

template <class Real>
Var<Real> avg_pool2d(Var<Real> input, std::size_t factor) {
  auto& t = tape_of(input);
  const auto& x = input.value();
  require(x.rank() == 3, "avg_pool2d input must be [C,H,W]");
  require(factor >= 1, "pool factor must be at least 1");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  require(h % factor == 0 && w % factor == 0, "pool factor " + std::to_string(factor) + " does not divide " +
                                                  std::to_string(h) + "x" + std::to_string(w));
  const std::size_t ho = h / factor, wo = w / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  BasicTensor<Real> out({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Acc acc = 0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) acc += x[(ch * h + oy * factor + dy) * w + ox * factor + dx];
        out[(ch * ho + oy) * wo + ox] = static_cast<Real>(acc * inv);
      }
  const std::size_t xi = input.id;
  return t.record(std::move(out), {input}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          gx[(ch * h + y) * w + xx] += static_cast<Real>(go[(ch * ho + y / factor) * wo + xx / factor] * inv);
  });
}

template <class Real>
Var<Real> global_avg_pool(Var<Real> input) {
  auto& t = tape_of(input);
  const auto& x = input.value();
  require(x.rank() == 3, "global_avg_pool input must be [C,H,W]");
  const std::size_t c = x.extent(0), n = x.extent(1) * x.extent(2);
  BasicTensor<Real> out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    Acc acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += x[ch * n + i];
    out[ch] = static_cast<Real>(acc / static_cast<double>(n));
  }
  const std::size_t xi = input.id;
  return t.record(std::move(out), {input}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const Real g = static_cast<Real>(go[ch] / static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) gx[ch * n + i] += g;
    }
  });
}

namespace {

// Max over `count` values spaced `step` apart; returns argmax offset index and
// the gap to the runner-up (infinite for a single value).
template <class Real>
std::pair<std::size_t, double> strided_argmax(const Real* v, std::size_t count, std::size_t step) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < count; ++i)
    if (v[i * step] > v[best * step]) best = i;
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i)
    if (i != best) gap = std::min(gap, static_cast<double>(v[best * step]) - static_cast<double>(v[i * step]));
  return {best, gap};
}

}  // namespace

template <class Real>
Var<Real> global_max_pool(Var<Real> input) {
  auto& t = tape_of(input);
  const auto& x = input.value();
  require(x.rank() == 3, "global_max_pool input must be [C,H,W]");
  const std::size_t c = x.extent(0), n = x.extent(1) * x.extent(2);
  BasicTensor<Real> out({c});
  std::vector<std::size_t> arg(c);
  double gap = std::numeric_limits<double>::infinity();
  std::uint64_t pattern = 0x9e3779b97f4a7c15ull;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto [best, g] = strided_argmax(x.data() + ch * n, n, 1);
    arg[ch] = ch * n + best;
    out[ch] = x[arg[ch]];
    gap = std::min(gap, g);
    pattern = mix_pattern(pattern, best);
  }
  t.note_kink(gap, pattern);
  const std::size_t xi = input.id;
  return t.record(std::move(out), {input}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t ch = 0; ch < c; ++ch) gx[arg[ch]] += go[ch];
  });
}

template <class Real>
Var<Real> channel_mean(Var<Real> input) {
  auto& t = tape_of(input);
  const auto& x = input.value();
  require(x.rank() == 3, "channel_mean input must be [C,H,W]");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2), n = h * w;
  BasicTensor<Real> out({1, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    Acc acc = 0;
    for (std::size_t ch = 0; ch < c; ++ch) acc += x[ch * n + i];
    out[i] = static_cast<Real>(acc / static_cast<double>(c));
  }
  const std::size_t xi = input.id;
  return t.record(std::move(out), {input}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < n; ++i) gx[ch * n + i] += static_cast<Real>(go[i] / static_cast<double>(c));
  });
}

template <class Real>
Var<Real> channel_max(Var<Real> input) {
  auto& t = tape_of(input);
  const auto& x = input.value();
  require(x.rank() == 3, "channel_max input must be [C,H,W]");
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2), n = h * w;
  BasicTensor<Real> out({1, h, w});
  std::vector<std::size_t> arg(n);
  double gap = std::numeric_limits<double>::infinity();
  std::uint64_t pattern = 0x632be59bd9b4e019ull;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [best, g] = strided_argmax(x.data() + i, c, n);
    arg[i] = best * n + i;
    out[i] = x[arg[i]];
    gap = std::min(gap, g);
    pattern = mix_pattern(pattern, best);
  }
  t.note_kink(gap, pattern);
  const std::size_t xi = input.id;
  return t.record(std::move(out), {input}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i) gx[arg[i]] += go[i];
  });
}

template <class Real>
Var<Real> concat_channels(Var<Real> a, Var<Real> b) {
  auto& t = tape_of(a);
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.rank() == 3 && bv.rank() == 3 && av.extent(1) == bv.extent(1) && av.extent(2) == bv.extent(2),
          "concat_channels needs [Ca,H,W] and [Cb,H,W]");
  BasicTensor<Real> out({av.extent(0) + bv.extent(0), av.extent(1), av.extent(2)});
  std::copy(av.values().begin(), av.values().end(), out.values().begin());
  std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.size()));
  const std::size_t ai = a.id, bi = b.id, na = av.size(), nb = bv.size();
  return t.record(std::move(out), {a, b}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    if (tp.requires_grad(ai)) {
      auto ga = tp.grad_mut(ai);
      for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
    }
    if (tp.requires_grad(bi)) {
      auto gb = tp.grad_mut(bi);
      for (std::size_t i = 0; i < nb; ++i) gb[i] += go[na + i];
    }
  });
}

template <class Real>
Var<Real> scale_channels(Var<Real> x, Var<Real> gate) {
  auto& t = tape_of(x);
  same_tape(x, gate);
  const auto& xv = x.value();
  const auto& gv = gate.value();
  require(xv.rank() == 3 && gv.size() == xv.extent(0), "scale_channels needs x [C,H,W] and gate [C]");
  const std::size_t c = xv.extent(0), n = xv.extent(1) * xv.extent(2);
  BasicTensor<Real> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] = gv[ch] * xv[ch * n + i];
  const std::size_t xi = x.id, gi = gate.id;
  return t.record(std::move(out), {x, gate}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& xval = tp.value(xi);
    const auto& gval = tp.value(gi);
    if (tp.requires_grad(xi)) {
      auto gx = tp.grad_mut(xi);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) gx[ch * n + i] += gval[ch] * go[ch * n + i];
    }
    if (tp.requires_grad(gi)) {
      auto gg = tp.grad_mut(gi);
      for (std::size_t ch = 0; ch < c; ++ch) {
        Acc acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += static_cast<Acc>(go[ch * n + i]) * xval[ch * n + i];
        gg[ch] += static_cast<Real>(acc);
      }
    }
  });
}

template <class Real>
Var<Real> shift_channels(Var<Real> x, Var<Real> shift) {
  auto& t = tape_of(x);
  same_tape(x, shift);
  const auto& xv = x.value();
  const auto& sv = shift.value();
  require(xv.rank() == 3 && sv.size() == xv.extent(0), "shift_channels needs x [C,H,W] and shift [C]");
  const std::size_t c = xv.extent(0), n = xv.extent(1) * xv.extent(2);
  BasicTensor<Real> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] = xv[ch * n + i] + sv[ch];
  const std::size_t xi = x.id, si = shift.id;
  return t.record(std::move(out), {x, shift}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    if (tp.requires_grad(xi)) {
      auto gx = tp.grad_mut(xi);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (tp.requires_grad(si)) {
      auto gs = tp.grad_mut(si);
      for (std::size_t ch = 0; ch < c; ++ch) {
        Acc acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += go[ch * n + i];
        gs[ch] += static_cast<Real>(acc);
      }
    }
  });
}

template <class Real>
Var<Real> scale_spatial(Var<Real> x, Var<Real> map) {
  auto& t = tape_of(x);
  same_tape(x, map);
  const auto& xv = x.value();
  const auto& mv = map.value();
  require(xv.rank() == 3 && mv.rank() == 3 && mv.extent(0) == 1 && mv.extent(1) == xv.extent(1) &&
              mv.extent(2) == xv.extent(2),
          "scale_spatial needs x [C,H,W] and map [1,H,W]");
  const std::size_t c = xv.extent(0), n = xv.extent(1) * xv.extent(2);
  BasicTensor<Real> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] = mv[i] * xv[ch * n + i];
  const std::size_t xi = x.id, mi = map.id;
  return t.record(std::move(out), {x, map}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& xval = tp.value(xi);
    const auto& mval = tp.value(mi);
    if (tp.requires_grad(xi)) {
      auto gx = tp.grad_mut(xi);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) gx[ch * n + i] += mval[i] * go[ch * n + i];
    }
    if (tp.requires_grad(mi)) {
      auto gm = tp.grad_mut(mi);
      for (std::size_t i = 0; i < n; ++i) {
        Acc acc = 0;
        for (std::size_t ch = 0; ch < c; ++ch) acc += static_cast<Acc>(go[ch * n + i]) * xval[ch * n + i];
        gm[i] += static_cast<Real>(acc);
      }
    }
  });
}

// ---------------------------------------------------------------- elementwise

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  auto& t = tape_of(a);
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.shape() == bv.shape(), "add: shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()) +
                                        " differ");
  BasicTensor<Real> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return t.record(std::move(out), {a, b}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    for (std::size_t id : {ai, bi}) {
      if (!tp.requires_grad(id)) continue;
      auto g = tp.grad_mut(id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  auto& t = tape_of(x);
  const auto& xv = x.value();
  BasicTensor<Real> out(xv.shape());
  double nearest = std::numeric_limits<double>::infinity();
  std::uint64_t pattern = 0xa0761d6478bd642full;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const bool on = xv[i] > Real(0);
    out[i] = on ? xv[i] : Real(0);
    nearest = std::min(nearest, std::abs(static_cast<double>(xv[i])));
    word = (word << 1) | (on ? 1u : 0u);
    if (i % 64 == 63) {
      pattern = mix_pattern(pattern, word);
      word = 0;
    }
  }
  t.note_kink(nearest, mix_pattern(pattern, word));
  const std::size_t xi = x.id;
  return t.record(std::move(out), {x}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& xval = tp.value(xi);
    auto gx = tp.grad_mut(xi);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xval[i] > Real(0)) gx[i] += go[i];
  });
}

template <class Real>
Var<Real> sigmoid(Var<Real> x) {
  auto& t = tape_of(x);
  const auto& xv = x.value();
  BasicTensor<Real> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<Real>(1.0 / (1.0 + std::exp(-static_cast<double>(xv[i]))));
  const std::size_t xi = x.id;
  return t.record(std::move(out), {x}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& y = tp.value(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * y[i] * (Real(1) - y[i]);
  });
}

template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape) {
  auto& t = tape_of(x);
  BasicTensor<Real> out(shape, std::vector<Real>(x.value().values().begin(), x.value().values().end()));
  const std::size_t xi = x.id;
  return t.record(std::move(out), {x}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    auto gx = tp.grad_mut(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, OptionalVar<Real> bias) {
  auto& t = tape_of(x);
  same_tape(x, weight);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  require(xv.rank() == 1, "linear input must be a vector, got " + to_string(xv.shape()));
  require(wv.rank() == 2 && wv.extent(1) == xv.size(),
          "linear weight " + to_string(wv.shape()) + " does not accept input " + to_string(xv.shape()));
  const std::size_t out_dim = wv.extent(0), in_dim = wv.extent(1);
  if (bias) {
    same_tape(x, *bias);
    require(bias->value().size() == out_dim, "linear bias length mismatch");
  }
  BasicTensor<Real> out({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    Acc acc = bias ? static_cast<Acc>(bias->value()[o]) : 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) acc += static_cast<Acc>(wv[o * in_dim + i]) * xv[i];
    out[o] = static_cast<Real>(acc);
  }
  const std::size_t xi = x.id, wi = weight.id;
  const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return t.record(std::move(out), {x, weight, bias}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& xval = tp.value(xi);
    const auto& wval = tp.value(wi);
    if (tp.requires_grad(xi)) {
      auto gx = tp.grad_mut(xi);
      for (std::size_t i = 0; i < in_dim; ++i) {
        Acc acc = 0;
        for (std::size_t o = 0; o < out_dim; ++o) acc += static_cast<Acc>(wval[o * in_dim + i]) * go[o];
        gx[i] += static_cast<Real>(acc);
      }
    }
    if (tp.requires_grad(wi)) {
      auto gw = tp.grad_mut(wi);
      for (std::size_t o = 0; o < out_dim; ++o)
        for (std::size_t i = 0; i < in_dim; ++i) gw[o * in_dim + i] += go[o] * xval[i];
    }
    if (bi && tp.requires_grad(*bi)) {
      auto gb = tp.grad_mut(*bi);
      for (std::size_t o = 0; o < out_dim; ++o) gb[o] += go[o];
    }
  });
}

// ---------------------------------------------------------------- reductions

template <class Real>
Var<Real> sum(Var<Real> x) {
  auto& t = tape_of(x);
  Acc acc = 0;
  for (Real v : x.value().values()) acc += v;
  const std::size_t xi = x.id;
  return t.record(BasicTensor<Real>({1}, std::vector<Real>{static_cast<Real>(acc)}), {x},
                  [=](Tape<Real>& tp, std::size_t self) {
                    const Real g = tp.grad_mut(self)[0];
                    for (auto& v : tp.grad_mut(xi)) v += g;
                  });
}

template <class Real>
Var<Real> mean_squared_error(Var<Real> a, Var<Real> b) {
  auto& t = tape_of(a);
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.shape() == bv.shape(), "mean_squared_error: shape mismatch");
  require(av.size() > 0, "mean_squared_error on empty tensors");
  Acc acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const Acc d = static_cast<Acc>(av[i]) - bv[i];
    acc += d * d;
  }
  const double n = static_cast<double>(av.size());
  const std::size_t ai = a.id, bi = b.id;
  return t.record(BasicTensor<Real>({1}, std::vector<Real>{static_cast<Real>(acc / n)}), {a, b},
                  [=](Tape<Real>& tp, std::size_t self) {
                    const double g = tp.grad_mut(self)[0];
                    const auto& aval = tp.value(ai);
                    const auto& bval = tp.value(bi);
                    const bool wa = tp.requires_grad(ai), wb = tp.requires_grad(bi);
                    Real* ga = wa ? tp.grad_mut(ai).data() : nullptr;
                    Real* gb = wb ? tp.grad_mut(bi).data() : nullptr;
                    for (std::size_t i = 0; i < aval.size(); ++i) {
                      const double d = 2.0 * g * (static_cast<double>(aval[i]) - bval[i]) / n;
                      if (ga) ga[i] += static_cast<Real>(d);
                      if (gb) gb[i] -= static_cast<Real>(d);
                    }
                  });
}

template <class Real>
Var<Real> l2_normalize(Var<Real> x) {
  auto& t = tape_of(x);
  const auto& xv = x.value();
  Acc sq = 0;
  for (Real v : xv.values()) sq += static_cast<Acc>(v) * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw RuntimeError("l2_normalize of a zero or non-finite vector");
  BasicTensor<Real> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<Real>(xv[i] / norm);
  const std::size_t xi = x.id;
  return t.record(std::move(out), {x}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& z = tp.value(self);
    auto gx = tp.grad_mut(xi);
    Acc dot = 0;
    for (std::size_t i = 0; i < z.size(); ++i) dot += static_cast<Acc>(z[i]) * go[i];
    for (std::size_t i = 0; i < z.size(); ++i) gx[i] += static_cast<Real>((go[i] - z[i] * dot) / norm);
  });
}

template <class Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, std::size_t target) {
  auto& t = tape_of(logits);
  const auto& lv = logits.value();
  require(lv.rank() == 1 && target < lv.size(), "softmax_cross_entropy: target out of range");
  double mx = -std::numeric_limits<double>::infinity();
  for (Real v : lv.values()) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> p(lv.size());
  double z = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) z += (p[i] = std::exp(lv[i] - mx));
  for (auto& v : p) v /= z;
  const double loss = -(lv[target] - mx - std::log(z));
  const std::size_t li = logits.id;
  return t.record(BasicTensor<Real>({1}, std::vector<Real>{static_cast<Real>(loss)}), {logits},
                  [=](Tape<Real>& tp, std::size_t self) {
                    const double g = tp.grad_mut(self)[0];
                    auto gl = tp.grad_mut(li);
                    for (std::size_t i = 0; i < p.size(); ++i)
                      gl[i] += static_cast<Real>(g * (p[i] - (i == target ? 1.0 : 0.0)));
                  });
}

#define HSCL_INSTANTIATE_OPS(R)                                                                            \
  template Var<R> conv2d(Var<R>, Var<R>, OptionalVar<R>, const Conv2dOptions&);                   \
  template Var<R> conv3d(Var<R>, Var<R>, OptionalVar<R>, const Conv3dOptions&);                   \
  template Var<R> avg_pool2d(Var<R>, std::size_t);                                                        \
  template Var<R> add(Var<R>, Var<R>);                                                                    \
  template Var<R> relu(Var<R>);                                                                           \
  template Var<R> sigmoid(Var<R>);                                                                        \
  template Var<R> reshape(Var<R>, Shape);                                                                 \
  template Var<R> linear(Var<R>, Var<R>, OptionalVar<R>);                                          \
  template Var<R> global_avg_pool(Var<R>);                                                                \
  template Var<R> global_max_pool(Var<R>);                                                                \
  template Var<R> channel_mean(Var<R>);                                                                   \
  template Var<R> channel_max(Var<R>);                                                                    \
  template Var<R> concat_channels(Var<R>, Var<R>);                                                        \
  template Var<R> scale_channels(Var<R>, Var<R>);                                                         \
  template Var<R> shift_channels(Var<R>, Var<R>);                                                         \
  template Var<R> scale_spatial(Var<R>, Var<R>);                                                          \
  template Var<R> sum(Var<R>);                                                                            \
  template Var<R> mean_squared_error(Var<R>, Var<R>);                                                     \
  template Var<R> l2_normalize(Var<R>);                                                                   \
  template Var<R> softmax_cross_entropy(Var<R>, std::size_t);

HSCL_INSTANTIATE_OPS(float)
HSCL_INSTANTIATE_OPS(double)

}  // namespace hscl::nn
