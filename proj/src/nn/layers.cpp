#include "hscl/nn/layers.hpp"

#include <cmath>

namespace hscl::nn {

template <class Real>
Var<Real> se_block(Var<Real> x, Var<Real> beta, Var<Real> gamma) {
  auto& t = *x.tape;
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ValidationError("se_block input must be [C,H,W], got " + to_string(xv.shape()));
  const std::size_t c = xv.extent(0), n = xv.extent(1) * xv.extent(2);
  if (beta.value().size() != c || gamma.value().size() != c) {
    throw ValidationError("se_block gate has " + std::to_string(beta.value().size()) + "/" +
                          std::to_string(gamma.value().size()) + " entries for " + std::to_string(c) + " channels");
  }
  std::vector<double> s(c), e(c);
  BasicTensor<Real> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += xv[ch * n + i];
    s[ch] = acc / static_cast<double>(n);
    const double u = static_cast<double>(beta.value()[ch]) * s[ch] + gamma.value()[ch];
    e[ch] = 1.0 / (1.0 + std::exp(-u));
    const Real ec = static_cast<Real>(e[ch]);
    for (std::size_t i = 0; i < n; ++i) out[ch * n + i] = ec * xv[ch * n + i];
  }
  const std::size_t xi = x.id, bi = beta.id, gi = gamma.id;
  return t.record(std::move(out), {x, beta, gamma}, [=](Tape<Real>& tp, std::size_t self) {
    auto go = tp.grad_mut(self);
    const auto& xval = tp.value(xi);
    const auto& bval = tp.value(bi);
    Real* gx = tp.requires_grad(xi) ? tp.grad_mut(xi).data() : nullptr;
    Real* gb = tp.requires_grad(bi) ? tp.grad_mut(bi).data() : nullptr;
    Real* gg = tp.requires_grad(gi) ? tp.grad_mut(gi).data() : nullptr;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double de = 0;
      for (std::size_t i = 0; i < n; ++i) de += static_cast<double>(go[ch * n + i]) * xval[ch * n + i];
      const double du = de * e[ch] * (1.0 - e[ch]);
      if (gb) gb[ch] += static_cast<Real>(du * s[ch]);
      if (gg) gg[ch] += static_cast<Real>(du);
      if (gx) {
        const double ds_term = du * bval[ch] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          gx[ch * n + i] += static_cast<Real>(e[ch] * go[ch * n + i] + ds_term);
      }
    }
  });
}

template <class Real>
Var<Real> depthwise_separable_conv(Var<Real> x, Var<Real> depth_kernels, Var<Real> point_kernels) {
  const auto& xv = x.value();
  const auto& dk = depth_kernels.value();
  const auto& pk = point_kernels.value();
  if (xv.rank() != 3) throw ValidationError("depthwise_separable_conv input must be [C,H,W]");
  const std::size_t c = xv.extent(0);
  if (dk.rank() != 4 || dk.extent(0) != c || dk.extent(1) != 1) {
    throw ValidationError("depth kernels must be [C,1,k,k] with C=" + std::to_string(c) + ", got " +
                          to_string(dk.shape()));
  }
  if (pk.rank() != 4 || pk.extent(1) != c || pk.extent(2) != 1 || pk.extent(3) != 1) {
    throw ValidationError("point kernels must be [Co,C,1,1], got " + to_string(pk.shape()));
  }
  auto spatial = conv2d(x, depth_kernels, std::nullopt, Conv2dOptions{c, 1, dk.extent(2) / 2});
  return conv2d(spatial, point_kernels, std::nullopt, Conv2dOptions{1, 1, 0});
}

template <class Real>
Var<Real> cbam_block(Var<Real> x, const CbamParams<Real>& p) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ValidationError("cbam_block input must be [C,H,W]");
  const std::size_t k = p.spatial_weight.value().rank() == 4 ? p.spatial_weight.value().extent(2) : 0;
  if (p.spatial_weight.value().rank() != 4 || p.spatial_weight.value().extent(0) != 1 ||
      p.spatial_weight.value().extent(1) != 2) {
    throw ValidationError("CBAM spatial kernel must be [1,2,k,k]");
  }
  auto mlp = [&](Var<Real> v) {
    return linear(relu(linear(v, p.fc1_weight, p.fc1_bias)), p.fc2_weight, p.fc2_bias);
  };
  auto channel_logits = add(mlp(global_avg_pool(x)), mlp(global_max_pool(x)));
  auto refined = scale_channels(x, sigmoid(channel_logits));
  auto descriptors = concat_channels(channel_mean(refined), channel_max(refined));
  auto spatial = sigmoid(conv2d(descriptors, p.spatial_weight, p.spatial_bias, Conv2dOptions{1, 1, k / 2}));
  return scale_spatial(refined, spatial);
}

template <class Real>
Var<Real> projection_head(Var<Real> features, const ProjectionHeadParams<Real>& p) {
  return linear(relu(linear(features, p.w1, p.b1)), p.w2, p.b2);
}

#define HSCL_INSTANTIATE_LAYERS(R)                                                  \
  template Var<R> se_block(Var<R>, Var<R>, Var<R>);                                 \
  template Var<R> depthwise_separable_conv(Var<R>, Var<R>, Var<R>);                 \
  template Var<R> cbam_block(Var<R>, const CbamParams<R>&);                         \
  template Var<R> projection_head(Var<R>, const ProjectionHeadParams<R>&);

HSCL_INSTANTIATE_LAYERS(float)
HSCL_INSTANTIATE_LAYERS(double)

}  // namespace hscl::nn
