#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hscl::metrics {

using Embedding = std::vector<double>;

// Fraction of queries whose K most cosine-similar other items include one
// with the same label. Ties rank the lower index first. Requires at least
// two items, 1 <= K < items, and no zero-norm embedding.
double topk_retrieval(std::span<const Embedding> embeddings, std::span<const std::uint16_t> labels, std::size_t k);

// Top-1 .. Top-K accuracies from a single ranking pass.
std::vector<double> topk_curve(std::span<const Embedding> embeddings, std::span<const std::uint16_t> labels,
                               std::size_t k);

}  // namespace hscl::metrics
