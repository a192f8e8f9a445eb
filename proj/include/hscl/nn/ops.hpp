#pragma once

#include <cstddef>
#include <optional>
#include <type_traits>

#include "hscl/nn/tape.hpp"

// Differentiable primitives. Each op validates shapes, records its forward
// value on the input's tape and registers the matching backward closure.
// Instantiated for float and double.

namespace hscl::nn {

struct Conv2dOptions {
  std::size_t groups = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

struct Conv3dOptions {
  std::size_t spectral_stride = 1;
  std::size_t spatial_stride = 1;
  std::size_t spectral_pad = 0;
  std::size_t spatial_pad = 0;
};

// Optional bias; kept out of template deduction so std::nullopt and plain
// Vars both bind.
template <class Real>
using OptionalVar = std::optional<std::type_identity_t<Var<Real>>>;

// Output extent for a strided window; throws unless the division is exact.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// input [C_in,H,W], kernels [C_out, C_in/groups, k, k], bias [C_out].
template <class Real>
Var<Real> conv2d(Var<Real> input, Var<Real> kernels, OptionalVar<Real> bias, const Conv2dOptions& opt);

// input [1,C,H,W], kernels [F,1,kc,kh,kw], bias [F] -> [F,C',H',W'].
template <class Real>
Var<Real> conv3d(Var<Real> input, Var<Real> kernels, OptionalVar<Real> bias, const Conv3dOptions& opt);

// Non-overlapping mean pooling, factor must divide H and W.
template <class Real>
Var<Real> avg_pool2d(Var<Real> input, std::size_t factor);

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b);
template <class Real>
Var<Real> relu(Var<Real> x);
template <class Real>
Var<Real> sigmoid(Var<Real> x);
template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape);

// x [D], weight [O,D], bias [O] -> [O]
template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, OptionalVar<Real> bias);

// [C,H,W] -> [C]
template <class Real>
Var<Real> global_avg_pool(Var<Real> x);
template <class Real>
Var<Real> global_max_pool(Var<Real> x);
// [C,H,W] -> [1,H,W]
template <class Real>
Var<Real> channel_mean(Var<Real> x);
template <class Real>
Var<Real> channel_max(Var<Real> x);
// [Ca,H,W] ++ [Cb,H,W] -> [Ca+Cb,H,W]
template <class Real>
Var<Real> concat_channels(Var<Real> a, Var<Real> b);
// x [C,H,W] * gate[c]
template <class Real>
Var<Real> scale_channels(Var<Real> x, Var<Real> gate);
// x [C,H,W] * map[0,h,w]
// x[c,:,:] + shift[c]
template <class Real>
Var<Real> shift_channels(Var<Real> x, Var<Real> shift);

template <class Real>
Var<Real> scale_spatial(Var<Real> x, Var<Real> map);

// Scalar reductions, shape [1].
template <class Real>
Var<Real> sum(Var<Real> x);
template <class Real>
Var<Real> mean_squared_error(Var<Real> a, Var<Real> b);

// x / ||x||_2; throws on a zero vector.
template <class Real>
Var<Real> l2_normalize(Var<Real> x);

// -log softmax(logits)[target]
template <class Real>
Var<Real> softmax_cross_entropy(Var<Real> logits, std::size_t target);

}  // namespace hscl::nn
