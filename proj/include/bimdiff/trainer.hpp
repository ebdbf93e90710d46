#pragma once

#include "bimdiff/data.hpp"
#include "bimdiff/metrics.hpp"
#include "bimdiff/model.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <thread>
#include <vector>

namespace bimdiff {

struct TrainOptions {
  int batch_size = 32;
  int epochs = 10;
  long max_steps = 0;  // 0: run all epochs
  AdamOptions adam;
  LossWeights loss;
  double clip_norm = 1.0;
  int threads = 1;
};

template <typename Scalar>
struct TrainState {
  BimDiffModel<Scalar> model;
  AdamState<Scalar> adam;
  Rng rng;
  long step = 0;

  TrainState(const ModelConfig& cfg, std::uint64_t seed) : model(cfg, seed), rng(derive_seed(seed, 100)) {}
};

struct StepReport {
  long step = 0;
  std::vector<double> condition_losses;  // per sample, drives special-pattern selection
  double condition = 0, consistency = 0, contrastive = 0, total = 0;
  double grad_norm = 0;
  int special_index = -1;
};

template <typename Scalar>
Matrix<Scalar> to_scalar(const MatrixXd& m) {
  return m.cast<Scalar>();
}

/// One optimizer step on a batch. Per-sample gradients are reduced in sample order, so the
/// result does not depend on the thread count. On a non-finite loss or gradient the step throws
/// NumericError and leaves the state untouched.
template <typename Scalar>
StepReport training_step(TrainState<Scalar>& state, std::span<const SeriesWindow* const> batch,
                         const TrainOptions& opt) {
  if (batch.empty()) throw InvariantError("training_step: empty batch");
  const auto b = batch.size();
  std::vector<SampleDraws<Scalar>> draws;
  draws.reserve(b);
  for (std::size_t i = 0; i < b; ++i) draws.push_back(state.model.draw(state.rng));

  auto master_params = state.model.params();
  std::vector<Matrix<Scalar>> grads;
  for (auto* p : master_params) grads.push_back(Matrix<Scalar>::Zero(p->values.rows(), p->values.cols()));

  const auto workers = static_cast<std::size_t>(std::clamp(opt.threads, 1, static_cast<int>(b)));
  std::vector<BimDiffModel<Scalar>> clones(workers, state.model);
  std::vector<SampleOutcome<Scalar>> outcomes(b);
  const auto scale = static_cast<Scalar>(1.0 / static_cast<double>(b));

  auto run = [&](std::size_t w, std::size_t i) {
    auto& clone = clones[w];
    auto params = clone.params();
    zero_grads(params);
    const auto& win = *batch[i];
    outcomes[i] = clone.train_sample(to_scalar<Scalar>(win.lookback), to_scalar<Scalar>(win.horizon), draws[i],
                                     opt.loss, scale, true);
  };
  for (std::size_t chunk = 0; chunk < b; chunk += workers) {
    const std::size_t n = std::min(workers, b - chunk);
    if (n == 1) {
      run(0, chunk);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < n; ++w) pool.emplace_back(run, w, chunk + w);
      for (auto& t : pool) t.join();
    }
    for (std::size_t w = 0; w < n; ++w) {
      auto params = clones[w].params();
      for (std::size_t p = 0; p < params.size(); ++p) grads[p] += params[p]->grad;
    }
  }

  StepReport rep;
  for (const auto& o : outcomes) {
    rep.condition_losses.push_back(o.condition_loss);
    rep.condition += o.condition_loss / static_cast<double>(b);
    rep.consistency += o.consistency / static_cast<double>(b);
    rep.contrastive += o.contrastive / static_cast<double>(b);
    rep.total += o.total / static_cast<double>(b);
  }
  if (!std::isfinite(rep.total))
    throw NumericError("non-finite training loss at step " + std::to_string(state.step + 1));

  for (std::size_t p = 0; p < master_params.size(); ++p) master_params[p]->grad = grads[p];
  rep.grad_norm = clip_grad_norm(master_params, opt.clip_norm);
  adam_step(master_params, state.adam, opt.adam);
  for (auto& m : state.model.memory().semantic) m.rejitter(state.rng);

  auto& bank = state.model.memory();
  if (bank.use_episodic()) {
    for (const auto& o : outcomes)
      for (std::size_t j = 0; j < o.episodic_hits.size(); ++j)
        bank.episodic_for(static_cast<Eigen::Index>(j)).touch(o.episodic_hits[j]);
    rep.special_index = select_special(rep.condition_losses);
    if (rep.special_index >= 0) {
      const auto& q = outcomes[static_cast<std::size_t>(rep.special_index)].queries;
      if (bank.shared) {
        std::vector<Vector<Scalar>> patterns;
        for (Eigen::Index j = 0; j < q.cols(); ++j) patterns.emplace_back(q.col(j));
        bank.episodic.front().update(patterns);
      } else {
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
          const Vector<Scalar> p = q.col(j);
          bank.episodic_for(j).update(std::span<const Vector<Scalar>>(&p, 1));
        }
      }
    }
  }
  rep.step = ++state.step;
  return rep;
}

/// Shuffled mini-batch epochs over `data`. `on_step` sees every report.
template <typename Scalar>
void train(TrainState<Scalar>& state, const std::vector<SeriesWindow>& data, const TrainOptions& opt,
           const std::function<void(const StepReport&, int epoch)>& on_step = {},
           const std::function<void(int epoch)>& on_epoch = {}) {
  if (data.empty()) throw DataError("no training windows");
  if (opt.batch_size < 1) throw UsageError("batch_size must be >= 1");
  std::vector<const SeriesWindow*> order;
  for (const auto& w : data) order.push_back(&w);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), state.rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      if (opt.max_steps > 0 && state.step >= opt.max_steps) return;
      const auto len = std::min(static_cast<std::size_t>(opt.batch_size), order.size() - start);
      const auto rep = training_step(state, std::span<const SeriesWindow* const>(order.data() + start, len), opt);
      if (on_step) on_step(rep, epoch);
    }
    if (on_epoch) on_epoch(epoch);
  }
}

struct EvalResult {
  double mae = 0, mse = 0;            // original data scale
  double mae_norm = 0, mse_norm = 0;  // normalized scale
  long windows = 0;
};

struct EvalOptions {
  int substeps = 1;
  Sampler sampler = Sampler::Ddim;
  std::uint64_t seed = 0;
};

/// Seed of the forecast for window `index`.
inline std::uint64_t forecast_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, 1000 + index); }

/// Forecasts every (normalized) window and scores it on both scales.
template <typename Scalar>
EvalResult evaluate(const BimDiffModel<Scalar>& model, const std::vector<SeriesWindow>& data, const NormStats& stats,
                    const EvalOptions& opt, std::vector<MatrixXd>* forecasts = nullptr) {
  if (data.empty()) throw DataError("cannot evaluate an empty split");
  ErrorAccumulator raw, norm;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng(forecast_seed(opt.seed, i));
    const MatrixXd pred = model.forecast(to_scalar<Scalar>(data[i].lookback), opt.substeps, rng, opt.sampler).template cast<double>();
    norm.add(data[i].horizon, pred);
    raw.add(denormalize(stats, data[i].horizon), denormalize(stats, pred));
    if (forecasts) forecasts->push_back(pred);
  }
  return {raw.mae(), raw.mse(), norm.mae(), norm.mse(), static_cast<long>(data.size())};
}

struct GridPoint {
  double alpha1 = 0, alpha2 = 0, score = 0;
};

struct GridResult {
  GridPoint best;
  std::vector<GridPoint> table;
};

/// Exhaustive search over alpha1 x alpha2 minimizing `score` (validation MAE). Ties resolve
/// toward the smaller alpha1, then the smaller alpha2.
inline GridResult grid_search(std::vector<double> alpha1, std::vector<double> alpha2,
                              const std::function<double(double, double)>& score) {
  if (alpha1.empty() || alpha2.empty()) throw UsageError("grid search needs a non-empty grid");
  std::sort(alpha1.begin(), alpha1.end());
  std::sort(alpha2.begin(), alpha2.end());
  GridResult r;
  r.best.score = std::numeric_limits<double>::infinity();
  for (double a1 : alpha1)
    for (double a2 : alpha2) {
      const double s = score(a1, a2);
      r.table.push_back({a1, a2, s});
      if (s < r.best.score) r.best = {a1, a2, s};
    }
  if (!std::isfinite(r.best.score)) throw NumericError("grid search produced no finite score");
  return r;
}

}  // namespace bimdiff
