#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hscl/nn/layers.hpp"
#include "hscl/nn/tensor.hpp"

namespace hscl::nn {

enum class Variant { kConv3D, kDSC, kCBAM, kSEB, kNone };
enum class AttentionPosition { kAfterSum, kBranch };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Shape of the residual feature extractor plus projection head.
///
/// Layout: optional input average-pool, stem conv, then one grouped residual
/// block per stage (1x1 reduce, grouped 3x3 with `cardinality` groups, 1x1
/// expand, identity or 1x1 projection shortcut). Each block is followed by
/// the variant's attention/conv block and stages after the first may
/// average-pool on entry. The embedding is the global average of the last
/// stage, so `stage_channels.back()` must equal `embedding_dim`.
struct BackboneConfig {
  Variant variant = Variant::kSEB;
  std::size_t cardinality = 4;
  std::vector<std::size_t> stage_channels{16, 32, 128};
  std::vector<std::size_t> stage_pool{1, 2, 2};
  std::size_t embedding_dim = 128;
  std::size_t projection_dim = 64;
  std::size_t input_bands = 32;
  std::size_t input_pool = 4;
  std::size_t stem_channels = 16;
  std::size_t stem_kernel = 3;
  AttentionPosition attention_position = AttentionPosition::kAfterSum;
  std::size_t cbam_reduction = 4;
  std::size_t cbam_kernel = 7;
  std::size_t conv3d_spectral_kernel = 3;
  // Fixed per-band (x - mean) / std ahead of the stem, fitted from data.
  bool input_standardize = true;
  // Weight bound is init_gain * sqrt(1/fan_in); biases use sqrt(1/fan_in)
  // or start at zero.
  double init_gain = 1.0;
  bool zero_bias_init = false;

  void validate() const;
  // Patch sides must be divisible by the total pooling factor.
  std::size_t total_pool() const;
  void validate_patch(std::size_t bands, std::size_t side) const;

  // Plain-text `key=value` lines.
  std::string to_text() const;
  static BackboneConfig from_text(const std::string& text);
  bool operator==(const BackboneConfig&) const = default;
};

struct ParameterSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
  enum class Init { kFanInUniform, kFanInBias, kOne, kZero } init = Init::kFanInUniform;
};

// Every parameter the config needs, in a fixed order.
std::vector<ParameterSpec> parameter_layout(const BackboneConfig& config);

// Fan-in scaled uniform weights (bound init_gain * sqrt(1/fan_in)); SE gates
// start at beta = 1, gamma = 0.
ParameterSet init_parameters(const BackboneConfig& config, std::uint64_t seed);

// Names of the fixed input statistics; optimizers leave them alone.
inline constexpr const char* kInputShift = "input.shift";
inline constexpr const char* kInputScale = "input.scale";

// Fits input.shift = -mean and input.scale = 1/std per band over every
// pixel of the given [C,S,S] patches. No-op when standardization is off.
void fit_input_standardization(const BackboneConfig& config, std::span<const Tensor> patches, ParameterSet& params);

// Throws ValidationError when a parameter is missing or mis-shaped.
template <class Real>
void check_parameters(const BackboneConfig& config, const BasicParameterSet<Real>& params);

template <class Real>
struct BackboneOutputs {
  Var<Real> embedding;                 // [D]
  std::vector<Var<Real>> stage_outputs;  // one [C_s, H_s, W_s] map per stage
};

template <class Real>
BackboneOutputs<Real> backbone_forward(Tape<Real>& tape, Var<Real> patch, const BackboneConfig& config,
                                       BasicParameterSet<Real>& params);

template <class Real>
Var<Real> projection_forward(Tape<Real>& tape, Var<Real> embedding, BasicParameterSet<Real>& params);

// Convenience: embedding of one [C,S,S] patch without keeping gradients.
Tensor embed(const Tensor& patch, const BackboneConfig& config, ParameterSet& params);

}  // namespace hscl::nn
