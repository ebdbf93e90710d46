#pragma once

#include "bimdiff/conditioning.hpp"
#include "bimdiff/denoiser.hpp"
#include "bimdiff/schedule.hpp"

#include <string>
#include <vector>

namespace bimdiff {

struct ModelConfig {
  int lookback = 96;
  int horizon = 24;
  int channels = 1;
  int latent_dim = 64;
  int encoder_hidden = 128;
  int denoiser_hidden = 256;
  int denoiser_layers = 3;
  int embed_dim = 16;
  int semantic_blocks = 64;
  int episodic_capacity = 70;
  int queue_capacity = 35;
  int recall_top_k = 5;
  double log_var_init = -4.0;
  bool use_semantic = true;
  bool use_episodic = true;
  bool shared_memory = true;
  int diffusion_steps = 10;
  ScheduleOptions schedule;

  /// Patterns pushed into each episodic store per update: one per channel when shared, else one.
  int patterns_per_update() const { return shared_memory ? channels : 1; }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v < 1) throw UsageError(std::string(what) + " must be positive");
    };
    positive(lookback, "lookback");
    positive(horizon, "horizon");
    positive(channels, "channels");
    positive(latent_dim, "latent_dim");
    positive(encoder_hidden, "encoder_hidden");
    positive(denoiser_hidden, "denoiser_hidden");
    if (denoiser_layers < 0) throw UsageError("denoiser_layers must be >= 0");
    positive(semantic_blocks, "semantic_blocks");
    positive(episodic_capacity, "episodic_capacity");
    positive(recall_top_k, "recall_top_k");
    positive(diffusion_steps, "diffusion_steps");
    if (embed_dim < 2 || embed_dim % 2) throw UsageError("embed_dim must be even and >= 2");
    if (queue_capacity > episodic_capacity) throw UsageError("queue_capacity (N3) must not exceed episodic_capacity (N2)");
    if (use_episodic && patterns_per_update() > queue_capacity)
      throw UsageError("episodic update size k=" + std::to_string(patterns_per_update()) +
                       " exceeds queue_capacity N3=" + std::to_string(queue_capacity));
  }
};

struct LossWeights {
  double alpha1 = 0.1;  // consistency
  double alpha2 = 0.1;  // contrastive
  double margin = 1.0;
};

enum class Sampler { Ddim, Ancestral };

/// Random draws consumed by one training sample. Fixing them makes the loss a deterministic
/// function of the parameters.
template <typename Scalar>
struct SampleDraws {
  int k = 1;
  Matrix<Scalar> noise;        // H x N diffusion noise
  Matrix<Scalar> mask;         // H x N future-mixup mask
  Matrix<Scalar> prior_noise;  // d x N
  Matrix<Scalar> latent_noise; // d x N
};

template <typename Scalar>
struct SampleOutcome {
  double condition_loss = 0;  // mean squared x0 error
  double consistency = 0;     // L1
  double contrastive = 0;     // L2
  double total = 0;
  Matrix<Scalar> queries;     // d x N, detached
  std::vector<std::vector<int>> episodic_hits;  // per channel: record indices recalled
};

/// Attention weights from one deterministic forward pass, one row per channel.
struct ScoreMatrices {
  MatrixXd semantic;  // N x N1
  MatrixXd episodic;  // N x (records in the channel's store), zero outside the top-k
};

template <typename Scalar>
class BimDiffModel {
 public:
  BimDiffModel() = default;

  BimDiffModel(const ModelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), schedule_(make_schedule(cfg.diffusion_steps, cfg.schedule)) {
    cfg_.validate();
    const int d = cfg.latent_dim, h = cfg.horizon;
    encoder_ = Mlp<Scalar>("encoder", {cfg.lookback, cfg.encoder_hidden, d}, Activation::Relu);
    projection_ = Mlp<Scalar>("projection", {2 * d, h}, Activation::Identity);
    std::vector<int> widths{2 * h + cfg.embed_dim};
    for (int l = 0; l < cfg.denoiser_layers; ++l) widths.push_back(cfg.denoiser_hidden);
    widths.push_back(h);
    denoiser_ = Mlp<Scalar>("denoiser", widths, Activation::Silu);
    w1_ = ParamTensor<Scalar>("condition.w1", d, d);
    w2_ = ParamTensor<Scalar>("condition.w2", d, d);
    log_var_prior_ = ParamTensor<Scalar>("condition.log_var_prior", d, 1);
    log_var_latent_ = ParamTensor<Scalar>("condition.log_var_latent", d, 1);

    const int copies = cfg.shared_memory ? 1 : cfg.channels;
    bank_.shared = cfg.shared_memory;
    for (int c = 0; c < copies; ++c) {
      const std::string suffix = cfg.shared_memory ? "" : "." + std::to_string(c);
      if (cfg.use_semantic) bank_.semantic.emplace_back("semantic.blocks" + suffix, d, cfg.semantic_blocks);
      if (cfg.use_episodic)
        bank_.episodic.emplace_back(d, cfg.episodic_capacity, cfg.queue_capacity, cfg.recall_top_k);
    }
    initialize(seed);
  }

  void initialize(std::uint64_t seed) {
    Rng enc(derive_seed(seed, 1)), proj(derive_seed(seed, 2)), den(derive_seed(seed, 3)), lin(derive_seed(seed, 4)),
        sem(derive_seed(seed, 5));
    encoder_.init_uniform(enc);
    projection_.init_uniform(proj);
    denoiser_.init_uniform(den);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto* w : {&w1_, &w2_})
      for (Eigen::Index i = 0; i < w->size(); ++i) w->values.data()[i] = static_cast<Scalar>(dist(lin));
    log_var_prior_.values.setConstant(static_cast<Scalar>(cfg_.log_var_init));
    log_var_latent_.values.setConstant(static_cast<Scalar>(cfg_.log_var_init));
    for (auto& m : bank_.semantic) m.init_normal(sem);
  }

  const ModelConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  MemoryBank<Scalar>& memory() { return bank_; }
  const MemoryBank<Scalar>& memory() const { return bank_; }
  Mlp<Scalar>& encoder() { return encoder_; }
  Mlp<Scalar>& projection() { return projection_; }
  Mlp<Scalar>& denoiser() { return denoiser_; }
  const Mlp<Scalar>& denoiser() const { return denoiser_; }
  ParamTensor<Scalar>& w1() { return w1_; }
  ParamTensor<Scalar>& w2() { return w2_; }
  ParamTensor<Scalar>& log_var_prior() { return log_var_prior_; }
  ParamTensor<Scalar>& log_var_latent() { return log_var_latent_; }

  /// Every learnable tensor, in a fixed order.
  ParamList<Scalar> params() {
    ParamList<Scalar> out;
    encoder_.collect(out);
    out.push_back(&w1_);
    out.push_back(&w2_);
    out.push_back(&log_var_prior_);
    out.push_back(&log_var_latent_);
    projection_.collect(out);
    denoiser_.collect(out);
    for (auto& m : bank_.semantic) out.push_back(&m.blocks);
    return out;
  }

  SampleDraws<Scalar> draw(Rng& rng) const {
    SampleDraws<Scalar> d;
    std::uniform_int_distribution<int> step(1, schedule_.steps());
    d.k = step(rng);
    d.noise = standard_normal<Scalar>(cfg_.horizon, cfg_.channels, rng);
    d.mask = uniform01<Scalar>(cfg_.horizon, cfg_.channels, rng);
    d.prior_noise = standard_normal<Scalar>(cfg_.latent_dim, cfg_.channels, rng);
    d.latent_noise = standard_normal<Scalar>(cfg_.latent_dim, cfg_.channels, rng);
    return d;
  }

  /// Training loss of one window under fixed draws. With `backprop`, gradients of
  /// `scale * total` are accumulated into the parameter grad buffers.
  SampleOutcome<Scalar> train_sample(const Matrix<Scalar>& lookback, const Matrix<Scalar>& y0,
                                     const SampleDraws<Scalar>& draws, const LossWeights& weights, Scalar scale,
                                     bool backprop) {
    check_channels(lookback.cols());
    check_shape(y0.rows() == cfg_.horizon && y0.cols() == lookback.cols(), "training target");
    const auto n = lookback.cols();
    SampleOutcome<Scalar> out;

    MlpTrace<Scalar> enc_trace;
    const Matrix<Scalar> queries = encode(encoder_, lookback, &enc_trace);
    const auto prior = memory_prior(queries, bank_, w2_, log_var_prior_, &draws.prior_noise);
    const auto head = condition_head(prior.m, queries, w1_, log_var_latent_, projection_, &draws.latent_noise);
    const Matrix<Scalar> c_mix = mix_condition(head.c, y0, draws.mask);
    const Matrix<Scalar> y_k = forward_sample(y0, draws.k, draws.noise, schedule_);
    MlpTrace<Scalar> den_trace;
    const Matrix<Scalar> y0_hat = denoise_predict(denoiser_, y_k, c_mix, draws.k, cfg_.embed_dim, &den_trace);

    const Matrix<Scalar> err = y0_hat - y0;
    const auto count = static_cast<double>(err.size());
    out.condition_loss = static_cast<double>(err.squaredNorm()) / count;

    std::vector<SemanticLossTerms<Scalar>> terms;
    if (bank_.use_semantic()) {
      for (Eigen::Index j = 0; j < n; ++j) {
        terms.push_back(semantic_loss_terms(bank_.semantic_for(j), Vector<Scalar>(queries.col(j)),
                                            prior.semantic[static_cast<std::size_t>(j)].scores,
                                            static_cast<Scalar>(weights.margin)));
        out.consistency += static_cast<double>(terms.back().consistency);
        out.contrastive += static_cast<double>(terms.back().contrastive);
      }
    }
    out.total = out.condition_loss + weights.alpha1 * out.consistency + weights.alpha2 * out.contrastive;
    out.queries = queries;
    if (bank_.use_episodic())
      for (const auto& a : prior.episodic) out.episodic_hits.push_back(a.indices);

    if (!backprop) return out;

    const Matrix<Scalar> d_y0_hat = (Scalar(2) * scale / static_cast<Scalar>(count)) * err;
    const Matrix<Scalar> d_c_mix = denoise_backward(denoiser_, den_trace, d_y0_hat);
    const Matrix<Scalar> d_c = d_c_mix.cwiseProduct(draws.mask);
    Matrix<Scalar> d_queries = Matrix<Scalar>::Zero(queries.rows(), n);
    const Matrix<Scalar> d_m = condition_head_backward(prior.m, w1_, log_var_latent_, projection_, head, d_c, d_queries);
    memory_prior_backward(queries, bank_, w2_, log_var_prior_, prior, d_m, d_queries);
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      semantic_loss_backward(bank_.semantic_for(jj), Vector<Scalar>(queries.col(jj)), terms[j],
                             static_cast<Scalar>(weights.alpha1) * scale, static_cast<Scalar>(weights.alpha2) * scale,
                             d_queries.col(jj));
    }
    encoder_.backward(enc_trace, d_queries);
    return out;
  }

  /// Deterministic inference condition c (c_mix = c at inference).
  Matrix<Scalar> condition(const Matrix<Scalar>& lookback) const {
    check_channels(lookback.cols());
    const Matrix<Scalar> queries = encode(encoder_, lookback);
    const auto prior = memory_prior<Scalar>(queries, bank_, w2_, log_var_prior_, nullptr);
    return condition_head<Scalar>(prior.m, queries, w1_, log_var_latent_, projection_, nullptr).c;
  }

  Matrix<Scalar> forecast(const Matrix<Scalar>& lookback, int substeps, Rng& rng, Sampler sampler = Sampler::Ddim) const {
    const Matrix<Scalar> c = condition(lookback);
    auto predict = [&](const Matrix<Scalar>& y, int k) {
      return denoise_predict(denoiser_, y, c, k, cfg_.embed_dim);
    };
    if (sampler == Sampler::Ancestral) return ancestral_sample<Scalar>(predict, schedule_, c.rows(), c.cols(), rng);
    return ddim_sample<Scalar>(predict, schedule_, substeps, c.rows(), c.cols(), rng);
  }

  /// Deterministic strided sampling from a caller-supplied y^K (H x N).
  Matrix<Scalar> forecast_from(const Matrix<Scalar>& lookback, int substeps, const Matrix<Scalar>& y_start) const {
    const Matrix<Scalar> c = condition(lookback);
    check_shape(y_start.rows() == c.rows() && y_start.cols() == c.cols(), "forecast start");
    auto predict = [&](const Matrix<Scalar>& y, int k) {
      return denoise_predict(denoiser_, y, c, k, cfg_.embed_dim);
    };
    return ddim_sample_from<Scalar>(predict, schedule_, substeps, y_start);
  }

  /// Recalled memories for each channel (d x N each), deterministic.
  std::pair<Matrix<Scalar>, Matrix<Scalar>> recalled_memories(const Matrix<Scalar>& lookback) const {
    check_channels(lookback.cols());
    const auto prior = memory_prior<Scalar>(encode(encoder_, lookback), bank_, w2_, log_var_prior_, nullptr);
    return {prior.m_semantic, prior.m_episodic};
  }

  ScoreMatrices attention_scores(const Matrix<Scalar>& lookback) const {
    check_channels(lookback.cols());
    const auto n = lookback.cols();
    const auto prior = memory_prior<Scalar>(encode(encoder_, lookback), bank_, w2_, log_var_prior_, nullptr);
    ScoreMatrices s;
    s.semantic = MatrixXd::Zero(n, bank_.use_semantic() ? cfg_.semantic_blocks : 0);
    for (std::size_t j = 0; j < prior.semantic.size(); ++j)
      s.semantic.row(static_cast<Eigen::Index>(j)) = prior.semantic[j].weights.template cast<double>().transpose();
    int records = 0;
    for (const auto& st : bank_.episodic) records = std::max(records, st.record_count());
    s.episodic = MatrixXd::Zero(n, records);
    for (std::size_t j = 0; j < prior.episodic.size(); ++j) {
      const auto& a = prior.episodic[j];
      for (std::size_t i = 0; i < a.indices.size(); ++i)
        s.episodic(static_cast<Eigen::Index>(j), a.indices[i]) = static_cast<double>(a.weights(static_cast<Eigen::Index>(i)));
    }
    return s;
  }

 private:
  void check_channels(Eigen::Index n) const {
    if (!cfg_.shared_memory && n != cfg_.channels)
      throw InvariantError("per-channel memories were built for " + std::to_string(cfg_.channels) + " channels, got " +
                           std::to_string(n));
  }

  ModelConfig cfg_;
  NoiseSchedule schedule_ = NoiseSchedule::from_betas({0.5});
  Mlp<Scalar> encoder_, projection_, denoiser_;
  ParamTensor<Scalar> w1_, w2_, log_var_prior_, log_var_latent_;
  MemoryBank<Scalar> bank_;
};

}  // namespace bimdiff
