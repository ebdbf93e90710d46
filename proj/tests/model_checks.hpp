#pragma once

#include "bimdiff/trainer.hpp"

#include <string>
#include <vector>

namespace checks {

using bimdiff::MatrixXd;

/// L=8, H=4, N=2, d=4, N1=3, N2=4, N3=2, K=4.
inline bimdiff::ModelConfig tiny_config() {
  bimdiff::ModelConfig c;
  c.lookback = 8;
  c.horizon = 4;
  c.channels = 2;
  c.latent_dim = 4;
  c.encoder_hidden = 6;
  c.denoiser_hidden = 6;
  c.denoiser_layers = 2;
  c.embed_dim = 4;
  c.semantic_blocks = 3;
  c.episodic_capacity = 4;
  c.queue_capacity = 2;
  c.recall_top_k = 2;
  c.diffusion_steps = 4;
  c.log_var_init = -1.0;
  return c;
}

inline std::vector<bimdiff::SeriesWindow> random_windows(const bimdiff::ModelConfig& c, int count, std::uint64_t seed) {
  bimdiff::Rng rng(seed);
  std::vector<bimdiff::SeriesWindow> out;
  for (int i = 0; i < count; ++i) {
    bimdiff::SeriesWindow w;
    w.lookback = bimdiff::standard_normal<double>(c.lookback, c.channels, rng);
    w.horizon = bimdiff::standard_normal<double>(c.horizon, c.channels, rng);
    w.origin = i;
    out.push_back(std::move(w));
  }
  return out;
}

/// Fills every episodic store with encoded random windows so that episodic recall carries gradient.
inline void prefill_episodic(bimdiff::BimDiffModel<double>& model, std::uint64_t seed) {
  auto& bank = model.memory();
  const auto& c = model.config();
  for (const auto& w : random_windows(c, 3, seed)) {
    const MatrixXd q = bimdiff::encode(model.encoder(), w.lookback);
    if (bank.shared) {
      std::vector<bimdiff::VectorXd> batch;
      for (int j = 0; j < q.cols(); ++j) batch.emplace_back(q.col(j));
      if (!bank.episodic.empty()) bank.episodic[0].update(batch);
    } else {
      for (int j = 0; j < static_cast<int>(bank.episodic.size()); ++j) {
        const bimdiff::VectorXd p = q.col(j);
        bank.episodic[static_cast<std::size_t>(j)].update(std::span<const bimdiff::VectorXd>(&p, 1));
      }
    }
  }
}

/// Central-difference check of every parameter gradient of the batch-mean total loss (batch of 2).
inline bimdiff::GradCheckReport full_loss_gradient_check(const bimdiff::ModelConfig& cfg, std::uint64_t seed) {
  using namespace bimdiff;
  BimDiffModel<double> model(cfg, seed);
  prefill_episodic(model, seed + 1);
  const auto batch = random_windows(cfg, 2, seed + 2);
  Rng rng(seed + 3);
  std::vector<SampleDraws<double>> draws{model.draw(rng), model.draw(rng)};
  LossWeights weights{0.3, 0.2, 4.0};  // large margin keeps the hinge active

  auto batch_loss = [&](bool backprop) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
      total += model.train_sample(batch[i].lookback, batch[i].horizon, draws[i], weights, 0.5, backprop).total * 0.5;
    return total;
  };
  auto params = model.params();
  zero_grads(params);
  batch_loss(true);
  return finite_diff_check<double>([&] { return batch_loss(false); }, params, {1e-6, 1e-4, 1e-6});
}

struct SharingResult {
  bool memories_equal = false;   // recalled semantic and episodic memories of the duplicated channel
  bool forecasts_equal = false;  // forecast of the duplicated channel under duplicated start noise
};

/// Duplicates channel 0 into channel 2 of a 3-channel input, after a few training steps, and
/// compares the duplicated channel's recalled memories and forecasts with the original's.
inline SharingResult channel_duplication(bool shared, std::uint64_t seed) {
  using namespace bimdiff;
  auto cfg = tiny_config();
  cfg.channels = 3;
  cfg.queue_capacity = 3;
  cfg.episodic_capacity = 6;
  cfg.shared_memory = shared;
  TrainState<double> state(cfg, seed);
  TrainOptions opt;
  opt.batch_size = 4;
  const auto data = random_windows(cfg, 12, seed + 1);
  opt.epochs = 1;
  train(state, data, opt);

  Rng rng(seed + 2);
  MatrixXd lb = standard_normal<double>(cfg.lookback, 3, rng);
  lb.col(2) = lb.col(0);
  MatrixXd start = standard_normal<double>(cfg.horizon, 3, rng);
  start.col(2) = start.col(0);
  const auto [ms, me] = state.model.recalled_memories(lb);
  const MatrixXd f = state.model.forecast_from(lb, 2, start);
  SharingResult r;
  r.memories_equal = ms.col(2) == ms.col(0) && me.col(2) == me.col(0);
  r.forecasts_equal = f.col(2) == f.col(0);
  return r;
}

}  // namespace checks
