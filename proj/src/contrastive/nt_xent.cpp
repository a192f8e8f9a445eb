#include "hscl/contrastive/nt_xent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hscl/error.hpp"

namespace hscl::contrastive {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<std::size_t> ContrastiveBatch::split_pairing(std::size_t n_pairs) {
  std::vector<std::size_t> p(2 * n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    p[i] = i + n_pairs;
    p[i + n_pairs] = i;
  }
  return p;
}

void ContrastiveBatch::validate(double unit_tolerance) const {
  const std::size_t n = embeddings.size();
  if (n < 2 || n % 2 != 0) throw ValidationError("a contrastive batch needs 2N >= 2 views");
  if (partner.size() != n) throw ValidationError("pairing map must cover every view");
  for (std::size_t i = 0; i < n; ++i) {
    if (partner[i] >= n || partner[i] == i || partner[partner[i]] != i) {
      throw ValidationError("pairing map is not a perfect matching");
    }
  }
  const std::size_t d = embeddings[0].size();
  if (d == 0) throw ValidationError("embeddings must be non-empty");
  for (const auto& z : embeddings) {
    if (z.size() != d) throw ValidationError("embeddings differ in dimension");
    const double norm = std::sqrt(dot(z, z));
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > unit_tolerance) {
      throw ValidationError("embedding is not unit-norm (|z| = " + std::to_string(norm) + ")");
    }
  }
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_sim: dimension mismatch");
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine_sim: zero-norm embedding");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

NtXentResult nt_xent_loss(const ContrastiveBatch& batch, const NtXentOptions& options) {
  if (!(options.tau > 0.0) || !std::isfinite(options.tau)) throw ValidationError("temperature must be positive");
  batch.validate(options.unit_tolerance);
  const auto& z = batch.embeddings;
  const std::size_t n = z.size(), d = z[0].size();
  const double inv_tau = 1.0 / options.tau;

  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i; k < n; ++k) sim[i * n + k] = sim[k * n + i] = dot(z[i], z[k]);

  NtXentResult r;
  r.grad.assign(n, Embedding(d, 0.0));
  const double weight = 1.0 / static_cast<double>(n);
  std::vector<double> prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = batch.partner[i];
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (k != i || options.include_self) m = std::max(m, sim[i * n + k] * inv_tau);
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      prob[k] = (k != i || options.include_self) ? std::exp(sim[i * n + k] * inv_tau - m) : 0.0;
      denom += prob[k];
    }
    const double log_denom = m + std::log(denom);
    r.loss += weight * (log_denom - sim[i * n + pos] * inv_tau);
    r.mean_positive_similarity += weight * sim[i * n + pos];
    // d l_i / d s_ik = (p_ik - [k = pos]) / tau; s_ik = z_i . z_k.
    for (std::size_t k = 0; k < n; ++k) {
      const double c = weight * inv_tau * (prob[k] / denom - (k == pos ? 1.0 : 0.0));
      if (c == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        r.grad[i][j] += c * z[k][j];
        r.grad[k][j] += c * z[i][j];
      }
    }
  }
  // Rounding can leave -1e-17 when every positive dominates.
  r.loss = std::max(r.loss, 0.0);
  return r;
}

std::size_t hard_negative(std::size_t anchor, std::size_t positive, std::span<const Embedding> embeddings) {
  const std::size_t n = embeddings.size();
  if (n < 3) throw ValidationError("hard_negative needs at least three views");
  if (anchor >= n || positive >= n || anchor == positive) throw ValidationError("hard_negative: bad anchor/positive");
  std::size_t best = n;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == anchor || k == positive) continue;
    const double s = cosine_sim(embeddings[anchor], embeddings[k]);
    if (s > best_sim) {
      best_sim = s;
      best = k;
    }
  }
  return best;
}

}  // namespace hscl::contrastive
