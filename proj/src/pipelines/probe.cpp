#include "hscl/pipelines/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "hscl/error.hpp"
#include "hscl/nn/adam.hpp"

namespace hscl::pipelines {

void ProbeOptions::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
  if (steps == 0) throw ValidationError("probe needs at least one step");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("probe learning rate must be positive");
}

ProbeResult linear_probe(std::span<const metrics::Embedding> features, std::span<const std::uint16_t> labels,
                         const ProbeOptions& options) {
  options.validate();
  const std::size_t n = features.size();
  if (n == 0 || labels.size() != n) throw ValidationError("probe needs one label per feature vector");
  const std::size_t dim = features[0].size();
  if (dim == 0) throw ValidationError("empty feature vectors");
  for (const auto& f : features) {
    if (f.size() != dim) throw ValidationError("feature vectors differ in dimension");
  }

  ProbeResult result;
  std::map<std::uint16_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw ValidationError("probe needs at least two classes");
  std::map<std::uint16_t, std::size_t> index_of;
  for (const auto& [label, _] : by_class) {
    index_of[label] = result.class_ids.size();
    result.class_ids.push_back(label);
  }
  const std::size_t k = result.class_ids.size();

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> train, test;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(members.size())));
    const std::size_t cut = std::min(take, members.size() - 1);  // keep one for testing
    if (cut == 0) result.missing_from_training.push_back(label);
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cut));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(cut), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  result.train_count = train.size();
  result.test_count = test.size();

  std::vector<std::size_t> target(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) target[i] = index_of.at(labels[train[i]]);
  if (options.shuffle_labels) std::shuffle(target.begin(), target.end(), rng);

  std::vector<double> mean(dim, 0.0), scale(dim, 1.0);
  for (auto i : train)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += features[i][d];
  for (auto& m : mean) m /= static_cast<double>(train.size());
  for (std::size_t d = 0; d < dim; ++d) {
    double var = 0.0;
    for (auto i : train) var += (features[i][d] - mean[d]) * (features[i][d] - mean[d]);
    const double sd = std::sqrt(var / static_cast<double>(train.size()));
    scale[d] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  auto standardized = [&](std::size_t i) {
    std::vector<double> x(dim);
    for (std::size_t d = 0; d < dim; ++d) x[d] = (features[i][d] - mean[d]) * scale[d];
    return x;
  };
  std::vector<std::vector<double>> xs;
  for (auto i : train) xs.push_back(standardized(i));

  nn::ParameterSet params;
  params.add("probe.weight", nn::Tensor({k, dim}));
  params.add("probe.bias", nn::Tensor({k}));
  nn::OptimizerState opt;
  opt.base_lr = options.learning_rate;
  auto logits = [&](const std::vector<double>& x) {
    const auto w = params.at("probe.weight").values();
    const auto b = params.at("probe.bias").values();
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = b[c];
      for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(w[c * dim + d]) * x[d];
      z[c] = acc;
    }
    return z;
  };

  if (!train.empty()) {
    std::vector<double> gw(k * dim), gb(k);
    for (std::size_t step = 0; step < options.steps; ++step) {
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        auto z = logits(xs[i]);
        const double zmax = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (auto& v : z) total += (v = std::exp(v - zmax));
        for (std::size_t c = 0; c < k; ++c) {
          const double g = (z[c] / total - (c == target[i] ? 1.0 : 0.0)) / static_cast<double>(xs.size());
          gb[c] += g;
          for (std::size_t d = 0; d < dim; ++d) gw[c * dim + d] += g * xs[i][d];
        }
      }
      auto w_grad = params.at("probe.weight").grad();
      auto b_grad = params.at("probe.bias").grad();
      for (std::size_t j = 0; j < gw.size(); ++j) w_grad[j] = static_cast<float>(gw[j]);
      for (std::size_t j = 0; j < gb.size(); ++j) b_grad[j] = static_cast<float>(gb[j]);
      nn::adam_step(params, opt);
    }
  }

  result.confusion = metrics::ConfusionMatrix(k);
  for (auto i : test) {
    const auto z = logits(standardized(i));
    const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    result.confusion.add(index_of.at(labels[i]), pred);
  }
  result.scores = metrics::classification_metrics(result.confusion);
  return result;
}

}  // namespace hscl::pipelines
