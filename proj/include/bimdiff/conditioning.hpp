#pragma once

#include "bimdiff/episodic_memory.hpp"
#include "bimdiff/nn.hpp"
#include "bimdiff/semantic_memory.hpp"

#include <vector>

namespace bimdiff {

enum class Mode { Train, Infer };

/// Per-channel queries: column j of the L x N lookback goes through the shared encoder.
template <typename Scalar>
Matrix<Scalar> encode(const Mlp<Scalar>& encoder, const Matrix<Scalar>& lookback, MlpTrace<Scalar>* trace = nullptr) {
  if (lookback.rows() != encoder.input_width())
    throw InvariantError("encode: lookback has " + std::to_string(lookback.rows()) + " rows, encoder expects " +
                         std::to_string(encoder.input_width()));
  return encoder.forward(lookback, trace);
}

/// Semantic and episodic memories. With `shared` there is one of each for all channels,
/// otherwise channel j owns copy j. A disabled memory has no copies at all.
template <typename Scalar>
struct MemoryBank {
  bool shared = true;
  std::vector<SemanticMemory<Scalar>> semantic;
  std::vector<EpisodicStore<Scalar>> episodic;

  bool use_semantic() const { return !semantic.empty(); }
  bool use_episodic() const { return !episodic.empty(); }
  std::size_t slot(Eigen::Index channel) const { return shared ? 0 : static_cast<std::size_t>(channel); }

  SemanticMemory<Scalar>& semantic_for(Eigen::Index j) { return semantic.at(slot(j)); }
  const SemanticMemory<Scalar>& semantic_for(Eigen::Index j) const { return semantic.at(slot(j)); }
  EpisodicStore<Scalar>& episodic_for(Eigen::Index j) { return episodic.at(slot(j)); }
  const EpisodicStore<Scalar>& episodic_for(Eigen::Index j) const { return episodic.at(slot(j)); }
};

template <typename Scalar>
struct MemoryPrior {
  Matrix<Scalar> m_semantic;  // d x N
  Matrix<Scalar> m_episodic;  // d x N
  Matrix<Scalar> mean;        // W2 (m^e + m^s)
  Matrix<Scalar> m;           // sampled (training) or mean (inference)
  Matrix<Scalar> noise;       // reparameterization draw, empty at inference
  std::vector<SemanticRecall<Scalar>> semantic;
  std::vector<EpisodicAttention<Scalar>> episodic;
};

/// Variational memory prior: mean W2 (m^e + m^s) per channel, plus exp(log_var / 2) * noise when
/// `noise` is given.
template <typename Scalar>
MemoryPrior<Scalar> memory_prior(const Matrix<Scalar>& queries, const MemoryBank<Scalar>& bank,
                                 const ParamTensor<Scalar>& w2, const ParamTensor<Scalar>& log_var,
                                 const Matrix<Scalar>* noise) {
  const auto d = queries.rows(), n = queries.cols();
  check_shape(w2.values.rows() == d && w2.values.cols() == d, "memory_prior W2");
  MemoryPrior<Scalar> p;
  p.m_semantic = Matrix<Scalar>::Zero(d, n);
  p.m_episodic = Matrix<Scalar>::Zero(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector<Scalar> h = queries.col(j);
    if (bank.use_semantic()) {
      p.semantic.push_back(recall_semantic(bank.semantic_for(j), h));
      p.m_semantic.col(j) = p.semantic.back().value;
    }
    if (bank.use_episodic()) {
      p.episodic.push_back(bank.episodic_for(j).attend(h));
      p.m_episodic.col(j) = p.episodic.back().value;
    }
  }
  p.mean = w2.values * (p.m_episodic + p.m_semantic);
  p.m = p.mean;
  if (noise) {
    check_shape(noise->rows() == d && noise->cols() == n, "memory_prior noise");
    p.noise = *noise;
    const Vector<Scalar> sigma = (Scalar(0.5) * log_var.values.col(0).array()).exp();
    p.m += (p.noise.array().colwise() * sigma.array()).matrix();
  }
  return p;
}

template <typename Scalar>
void memory_prior_backward(const Matrix<Scalar>& queries, MemoryBank<Scalar>& bank, ParamTensor<Scalar>& w2,
                           ParamTensor<Scalar>& log_var, const MemoryPrior<Scalar>& p, const Matrix<Scalar>& d_m,
                           Matrix<Scalar>& d_queries) {
  if (p.noise.size() > 0) {
    const Vector<Scalar> sigma = (Scalar(0.5) * log_var.values.col(0).array()).exp();
    log_var.grad.col(0) += Scalar(0.5) * (d_m.cwiseProduct(p.noise).rowwise().sum()).cwiseProduct(sigma);
  }
  w2.grad.noalias() += d_m * (p.m_episodic + p.m_semantic).transpose();
  const Matrix<Scalar> d_sum = w2.values.transpose() * d_m;
  for (Eigen::Index j = 0; j < queries.cols(); ++j) {
    const Vector<Scalar> h = queries.col(j);
    const Vector<Scalar> g = d_sum.col(j);
    if (bank.use_semantic())
      recall_semantic_backward(bank.semantic_for(j), h, p.semantic[static_cast<std::size_t>(j)], g, d_queries.col(j));
    if (bank.use_episodic())
      recall_episodic_backward(bank.episodic_for(j), h, p.episodic[static_cast<std::size_t>(j)], g, d_queries.col(j));
  }
}

template <typename Scalar>
struct ConditionHead {
  Matrix<Scalar> latent;  // W1 m (+ noise)
  Matrix<Scalar> noise;
  Matrix<Scalar> c;       // H x N
  MlpTrace<Scalar> trace;
};

/// c_j = projection([W1 m_j + exp(log_var / 2) * noise_j ; h_j]).
template <typename Scalar>
ConditionHead<Scalar> condition_head(const Matrix<Scalar>& m, const Matrix<Scalar>& queries,
                                     const ParamTensor<Scalar>& w1, const ParamTensor<Scalar>& log_var,
                                     const Mlp<Scalar>& projection, const Matrix<Scalar>* noise) {
  check_shape(m.rows() == queries.rows() && m.cols() == queries.cols(), "condition_head m vs queries");
  ConditionHead<Scalar> out;
  out.latent = w1.values * m;
  if (noise) {
    check_shape(noise->rows() == m.rows() && noise->cols() == m.cols(), "condition_head noise");
    out.noise = *noise;
    const Vector<Scalar> sigma = (Scalar(0.5) * log_var.values.col(0).array()).exp();
    out.latent += (out.noise.array().colwise() * sigma.array()).matrix();
  }
  Matrix<Scalar> input(m.rows() * 2, m.cols());
  input << out.latent, queries;
  out.c = projection.forward(input, &out.trace);
  return out;
}

/// Returns dLoss/dm; adds the query gradient into d_queries.
template <typename Scalar>
Matrix<Scalar> condition_head_backward(const Matrix<Scalar>& m, ParamTensor<Scalar>& w1, ParamTensor<Scalar>& log_var,
                                       Mlp<Scalar>& projection, const ConditionHead<Scalar>& head,
                                       const Matrix<Scalar>& d_c, Matrix<Scalar>& d_queries) {
  const auto d = m.rows();
  const Matrix<Scalar> d_input = projection.backward(head.trace, d_c);
  const Matrix<Scalar> d_latent = d_input.topRows(d);
  d_queries += d_input.bottomRows(d);
  if (head.noise.size() > 0) {
    const Vector<Scalar> sigma = (Scalar(0.5) * log_var.values.col(0).array()).exp();
    log_var.grad.col(0) += Scalar(0.5) * (d_latent.cwiseProduct(head.noise).rowwise().sum()).cwiseProduct(sigma);
  }
  w1.grad.noalias() += d_latent * m.transpose();
  return w1.values.transpose() * d_latent;
}

template <typename Scalar>
struct MixedCondition {
  Matrix<Scalar> c_mix;
  Matrix<Scalar> mask;
};

template <typename Scalar>
Matrix<Scalar> mix_condition(const Matrix<Scalar>& c, const Matrix<Scalar>& y0, const Matrix<Scalar>& mask) {
  check_shape(c.rows() == y0.rows() && c.cols() == y0.cols() && mask.rows() == c.rows() && mask.cols() == c.cols(),
              "future mixup operands");
  return (mask.array() * c.array() + (Scalar(1) - mask.array()) * y0.array()).matrix();
}

/// Future mixup. In Mode::Infer the ground truth is unavailable and c passes through unchanged
/// (the reported mask is all ones).
template <typename Scalar>
MixedCondition<Scalar> future_mixup(const Matrix<Scalar>& c, const Matrix<Scalar>& y0, Rng& rng, Mode mode) {
  if (mode == Mode::Infer) return {c, Matrix<Scalar>::Ones(c.rows(), c.cols())};
  Matrix<Scalar> mask = uniform01<Scalar>(c.rows(), c.cols(), rng);
  return {mix_condition(c, y0, mask), mask};
}

}  // namespace bimdiff
