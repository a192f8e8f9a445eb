#include "hscl/metrics/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hscl/error.hpp"

namespace hscl::metrics {

std::vector<double> topk_curve(std::span<const Embedding> embeddings, std::span<const std::uint16_t> labels,
                               std::size_t k) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw ValidationError("retrieval needs at least two embeddings");
  if (labels.size() != n) throw ValidationError("labels and embeddings differ in count");
  if (k == 0 || k >= n) {
    throw ValidationError("K must lie in [1, " + std::to_string(n - 1) + "], got " + std::to_string(k));
  }
  const std::size_t dim = embeddings[0].size();
  std::vector<Embedding> unit(embeddings.begin(), embeddings.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (unit[i].size() != dim) throw ValidationError("embeddings differ in dimension");
    double norm = 0.0;
    for (double v : unit[i]) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw ValidationError("embedding " + std::to_string(i) + " has zero or non-finite norm");
    }
    for (double& v : unit[i]) v /= norm;
  }

  std::vector<std::size_t> first_hit_rank_count(k, 0);
  std::vector<std::size_t> order(n - 1);
  std::vector<double> sim(n);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t j = 0; j < n; ++j) {
      sim[j] = std::inner_product(unit[q].begin(), unit[q].end(), unit[j].begin(), 0.0);
    }
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != q) order[m++] = j;
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); });
    for (std::size_t r = 0; r < k; ++r) {
      if (labels[order[r]] == labels[q]) {
        ++first_hit_rank_count[r];
        break;
      }
    }
  }
  std::vector<double> curve(k);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k; ++r) {
    hits += first_hit_rank_count[r];
    curve[r] = static_cast<double>(hits) / static_cast<double>(n);
  }
  return curve;
}

double topk_retrieval(std::span<const Embedding> embeddings, std::span<const std::uint16_t> labels, std::size_t k) {
  return topk_curve(embeddings, labels, k).back();
}

}  // namespace hscl::metrics
