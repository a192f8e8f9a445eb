#pragma once

#include <cstddef>

#include "hscl/nn/ops.hpp"

namespace hscl::nn {

/// Squeeze-and-excitation gate with one affine pair per channel:
///   s_c = mean_{i,j} x_ijc,  e_c = sigmoid(beta_c * s_c + gamma_c),
///   x'_ijc = e_c * x_ijc.
template <class Real>
Var<Real> se_block(Var<Real> x, Var<Real> beta, Var<Real> gamma);

// Depthwise k x k pass (one kernel per channel) followed by a 1 x 1 mix.
// depth [C,1,k,k], point [C_out,C,1,1]; padding keeps the spatial extent.
template <class Real>
Var<Real> depthwise_separable_conv(Var<Real> x, Var<Real> depth_kernels, Var<Real> point_kernels);

template <class Real>
struct CbamParams {
  Var<Real> fc1_weight;      // [C/r, C]
  Var<Real> fc1_bias;        // [C/r]
  Var<Real> fc2_weight;      // [C, C/r]
  Var<Real> fc2_bias;        // [C]
  Var<Real> spatial_weight;  // [1, 2, k, k]
  Var<Real> spatial_bias;    // [1]
};

// Channel attention (mean- and max-pooled descriptors through a shared
// bottleneck MLP, summed, sigmoid) then spatial attention (channel-wise mean
// and max maps through a k x k conv, sigmoid), each applied multiplicatively.
template <class Real>
Var<Real> cbam_block(Var<Real> x, const CbamParams<Real>& p);

template <class Real>
struct ProjectionHeadParams {
  Var<Real> w1;  // [D', D]
  Var<Real> b1;  // [D']
  Var<Real> w2;  // [D', D']
  Var<Real> b2;  // [D']
};

// Z = W2 relu(W1 F + b1) + b2
template <class Real>
Var<Real> projection_head(Var<Real> features, const ProjectionHeadParams<Real>& p);

}  // namespace hscl::nn
