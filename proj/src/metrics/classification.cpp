#include "hscl/metrics/classification.hpp"

#include <string>

#include "hscl/error.hpp"

namespace hscl::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t ref, std::size_t pred, std::uint64_t count) {
  if (ref >= k_ || pred >= k_) {
    throw ValidationError("class pair (" + std::to_string(ref) + ", " + std::to_string(pred) + ") outside " +
                          std::to_string(k_) + " classes");
  }
  counts_[ref * k_ + pred] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_total(std::size_t ref) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < k_; ++j) t += at(ref, j);
  return t;
}

std::uint64_t ConfusionMatrix::col_total(std::size_t pred) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, pred);
  return t;
}

ConfusionMatrix ConfusionMatrix::from_pairs(std::size_t classes, std::span<const std::size_t> reference,
                                            std::span<const std::size_t> predicted) {
  if (reference.size() != predicted.size()) throw ValidationError("reference and prediction counts differ");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < reference.size(); ++i) cm.add(reference[i], predicted[i]);
  return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  const auto total = static_cast<double>(cm.total());
  if (total == 0.0) throw ValidationError("confusion matrix is empty");
  ClassificationMetrics m;
  double trace = 0.0, pe = 0.0, recall_sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    const auto row = static_cast<double>(cm.row_total(k));
    const auto col = static_cast<double>(cm.col_total(k));
    trace += static_cast<double>(cm.at(k, k));
    pe += row * col;
    if (row == 0.0) {
      m.unsupported_classes.push_back(k);
      continue;
    }
    recall_sum += static_cast<double>(cm.at(k, k)) / row;
    ++supported;
  }
  m.overall_accuracy = trace / total;
  m.average_accuracy = recall_sum / static_cast<double>(supported);
  pe /= total * total;
  // Perfect chance agreement (a single populated class) makes kappa 0/0;
  // report 1 when the predictions also agree perfectly, else 0.
  m.kappa = pe == 1.0 ? (m.overall_accuracy == 1.0 ? 1.0 : 0.0) : (m.overall_accuracy - pe) / (1.0 - pe);
  return m;
}

}  // namespace hscl::metrics
