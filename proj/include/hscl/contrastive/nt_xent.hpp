#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hscl::contrastive {

using Embedding = std::vector<double>;

/// 2N projected embeddings with a perfect pairing i <-> partner[i].
struct ContrastiveBatch {
  std::vector<Embedding> embeddings;
  std::vector<std::size_t> partner;

  // Views 0..N-1 pair with N..2N-1.
  static std::vector<std::size_t> split_pairing(std::size_t n_pairs);
  std::size_t pairs() const { return embeddings.size() / 2; }
  // Checks the matching, equal dimensions and unit norms within `tolerance`.
  void validate(double unit_tolerance = 1e-5) const;
};

struct NtXentOptions {
  double tau = 0.5;
  // Keep the j = i term in the denominator (literal reading of the sum).
  bool include_self = false;
  double unit_tolerance = 1e-5;
};

struct NtXentResult {
  double loss = 0.0;
  std::vector<Embedding> grad;  // d loss / d z, one per view
  double mean_positive_similarity = 0.0;
};

// Dot product of the normalized inputs; throws on zero norm.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Mean over all 2N anchors of -log(exp(s_ip/tau) / sum_k exp(s_ik/tau)).
NtXentResult nt_xent_loss(const ContrastiveBatch& batch, const NtXentOptions& options = {});

// Most similar view to `anchor` other than itself and `positive`; ties go to
// the lowest index. Needs at least three views.
std::size_t hard_negative(std::size_t anchor, std::size_t positive, std::span<const Embedding> embeddings);

}  // namespace hscl::contrastive
