#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hscl/metrics/classification.hpp"
#include "hscl/metrics/retrieval.hpp"

namespace hscl::pipelines {

struct ProbeOptions {
  double train_fraction = 0.5;  // per class
  std::size_t steps = 300;      // full-batch Adam steps
  double learning_rate = 1e-2;
  std::uint64_t seed = 7;
  // Control run: permute the training labels before fitting.
  bool shuffle_labels = false;

  void validate() const;
};

struct ProbeResult {
  std::vector<std::uint16_t> class_ids;  // confusion-matrix index -> label
  metrics::ConfusionMatrix confusion{1};
  metrics::ClassificationMetrics scores;
  std::vector<std::uint16_t> missing_from_training;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

// Softmax regression on standardized frozen features, evaluated on a
// seeded per-class hold-out split.
ProbeResult linear_probe(std::span<const metrics::Embedding> features, std::span<const std::uint16_t> labels,
                         const ProbeOptions& options);

}  // namespace hscl::pipelines
