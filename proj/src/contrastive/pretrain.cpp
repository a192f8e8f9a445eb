#include "hscl/contrastive/pretrain.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <utility>

#include "hscl/error.hpp"
#include "hscl/nn/ops.hpp"

namespace hscl::contrastive {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string EpochStats::to_tsv() const {
  return std::to_string(epoch) + "\t" + fmt(mean_loss) + "\t" + fmt(mean_positive_similarity) + "\t" +
         fmt(mean_hard_negative_similarity) + "\t" + fmt(learning_rate);
}

void PretrainOptions::validate(std::size_t dataset_size) const {
  if (batch < 1) throw ValidationError("batch size must be at least 1");
  if (dataset_size < batch) {
    throw ValidationError("dataset has " + std::to_string(dataset_size) + " patches, fewer than the batch size " +
                          std::to_string(batch));
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("temperature must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ValidationError("decay factor must lie in (0,1]");
  for (double f : decay_at)
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("decay points are fractions in [0,1]");
}

PretrainResult pretrain(std::span<const nn::Tensor> dataset, const nn::BackboneConfig& config,
                        const AugmentationSpec& augmentation, const PretrainOptions& options,
                        nn::ParameterSet initial) {
  options.validate(dataset.size());
  augmentation.validate();
  config.validate();
  nn::check_parameters(config, initial);
  for (const auto& p : dataset) {
    if (p.rank() != 3) throw ValidationError("dataset patches must be [C,S,S]");
    if (!options.view_transform) config.validate_patch(p.extent(0), p.extent(1));
  }
  if (options.view_transform && !dataset.empty()) {
    const auto probe = options.view_transform(dataset.front());
    if (probe.rank() != 3) throw ValidationError("view transform must yield [C,S,S]");
    config.validate_patch(probe.extent(0), probe.extent(1));
  }

  PretrainResult result;
  result.params = std::move(initial);
  const std::size_t n = options.batch;
  const std::size_t steps_per_epoch = dataset.size() / n;
  auto& opt = result.optimizer;
  opt.base_lr = options.learning_rate;
  opt.schedule = nn::stepped_schedule(steps_per_epoch * options.epochs, options.decay_at, options.decay_factor);
  opt.frozen = {nn::kInputShift, nn::kInputScale};
  opt.validate();
  const auto pairing = ContrastiveBatch::split_pairing(n);
  const NtXentOptions loss_opts{options.tau, options.include_self, 1e-4};

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = view_rng(options.seed, epoch, ~0ull, ~0ull);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = opt.lr_at(opt.step);
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<std::unique_ptr<nn::Tape<float>>> tapes;
      std::vector<nn::Var<float>> outputs;
      ContrastiveBatch batch;
      batch.partner = pairing;
      for (std::size_t v = 0; v < 2 * n; ++v) {
        const auto& patch = dataset[order[step * n + v % n]];
        Rng rng = view_rng(options.seed ^ (augmentation.seed * 0x9e3779b97f4a7c15ull), epoch, step, v);
        auto view = augment(patch, augmentation, rng);
        if (options.view_transform) view = options.view_transform(view);
        auto& tape = *tapes.emplace_back(std::make_unique<nn::Tape<float>>());
        auto x = tape.leaf(std::move(view), /*requires_grad=*/false);
        auto features = nn::backbone_forward(tape, x, config, result.params);
        auto z = nn::l2_normalize(nn::projection_forward(tape, features.embedding, result.params));
        outputs.push_back(z);
        const auto vals = z.value().values();
        batch.embeddings.emplace_back(vals.begin(), vals.end());
      }

      const auto loss = nt_xent_loss(batch, loss_opts);
      if (!std::isfinite(loss.loss)) {
        throw RuntimeError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      result.params.zero_grad();
      for (std::size_t v = 0; v < 2 * n; ++v) {
        std::vector<float> seed(loss.grad[v].begin(), loss.grad[v].end());
        tapes[v]->backward(outputs[v], seed);
      }
      for (const auto& [name, t] : result.params) {
        if (!t.has_grad()) continue;
        for (float g : std::as_const(t).grad()) {
          if (!std::isfinite(g)) {
            throw RuntimeError("non-finite gradient for '" + name + "' at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step));
          }
        }
      }
      nn::adam_step(result.params, opt);

      double hard = 0.0;
      if (2 * n >= 3) {
        for (std::size_t i = 0; i < 2 * n; ++i) {
          const auto k = hard_negative(i, pairing[i], batch.embeddings);
          hard += cosine_sim(batch.embeddings[i], batch.embeddings[k]);
        }
        hard /= static_cast<double>(2 * n);
      } else {
        hard = std::nan("");
      }
      stats.mean_loss += loss.loss;
      stats.mean_positive_similarity += loss.mean_positive_similarity;
      stats.mean_hard_negative_similarity += hard;
    }
    if (steps_per_epoch > 0) {
      const double inv = 1.0 / static_cast<double>(steps_per_epoch);
      stats.mean_loss *= inv;
      stats.mean_positive_similarity *= inv;
      stats.mean_hard_negative_similarity *= inv;
    }
    result.log.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
    if (options.checkpoint_every && options.on_checkpoint && epoch % options.checkpoint_every == 0) {
      options.on_checkpoint(epoch, result.params);
    }
  }
  return result;
}

}  // namespace hscl::contrastive
