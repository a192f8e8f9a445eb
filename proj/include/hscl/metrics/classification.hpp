#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hscl::metrics {

// Rows are reference classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t ref, std::size_t pred) const { return counts_[ref * k_ + pred]; }
  void add(std::size_t ref, std::size_t pred, std::uint64_t count = 1);
  std::uint64_t total() const;
  std::uint64_t row_total(std::size_t ref) const;
  std::uint64_t col_total(std::size_t pred) const;

  // Class ids are 0-based and must be < classes.
  static ConfusionMatrix from_pairs(std::size_t classes, std::span<const std::size_t> reference,
                                    std::span<const std::size_t> predicted);

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct ClassificationMetrics {
  double overall_accuracy = 0.0;
  double average_accuracy = 0.0;
  double kappa = 0.0;
  // Classes with no reference samples; left out of the average accuracy.
  std::vector<std::size_t> unsupported_classes;
};

// Throws ValidationError on an empty matrix.
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

}  // namespace hscl::metrics
