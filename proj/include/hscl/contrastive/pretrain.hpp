#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hscl/contrastive/augment.hpp"
#include "hscl/contrastive/nt_xent.hpp"
#include "hscl/nn/adam.hpp"
#include "hscl/nn/backbone.hpp"

namespace hscl::contrastive {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_positive_similarity = 0.0;
  double mean_hard_negative_similarity = 0.0;
  double learning_rate = 0.0;

  // epoch, loss, positive sim, hard-negative sim, lr; tab-separated.
  std::string to_tsv() const;
};

struct PretrainOptions {
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double tau = 0.5;
  bool include_self = false;
  double learning_rate = 1e-4;
  std::vector<double> decay_at{0.4, 0.8};  // fractions of total steps
  double decay_factor = 0.1;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables the callback
  std::function<void(std::size_t epoch, const nn::ParameterSet&)> on_checkpoint;
  std::function<void(const EpochStats&)> on_epoch;
  // Applied to each augmented view before the backbone, e.g. a band
  // selection, so augmentations act in the original band space.
  std::function<nn::Tensor(const nn::Tensor&)> view_transform;

  void validate(std::size_t dataset_size) const;
};

struct PretrainResult {
  nn::ParameterSet params;
  std::vector<EpochStats> log;
  nn::OptimizerState optimizer;
};

// Self-supervised training: each step draws N patches from a seeded
// shuffle, builds two augmented views per patch, and applies one Adam
// update on the NT-Xent loss of the 2N projected, normalized embeddings.
// Throws RuntimeError naming the epoch and step if the loss turns non-finite.
PretrainResult pretrain(std::span<const nn::Tensor> dataset, const nn::BackboneConfig& config,
                        const AugmentationSpec& augmentation, const PretrainOptions& options,
                        nn::ParameterSet initial);

}  // namespace hscl::contrastive
