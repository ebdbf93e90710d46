#pragma once

#include "bimdiff/nn.hpp"
#include "bimdiff/schedule.hpp"

#include <cmath>
#include <vector>

namespace bimdiff {

/// Sinusoidal step embedding: [sin(k f_i) ..., cos(k f_i) ...] with f_i = 10000^(-i / (dim/2)).
template <typename Scalar>
Vector<Scalar> step_embedding(int k, int dim) {
  if (dim < 2 || dim % 2 != 0) throw UsageError("step embedding dimension must be even and >= 2");
  const int half = dim / 2;
  Vector<Scalar> e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e(i) = static_cast<Scalar>(std::sin(k * freq));
    e(half + i) = static_cast<Scalar>(std::cos(k * freq));
  }
  return e;
}

/// Shared-weight x0-predictor applied to each channel: [y^k_j ; c_mix_j ; emb(k)] -> H.
template <typename Scalar>
Matrix<Scalar> denoise_predict(const Mlp<Scalar>& net, const Matrix<Scalar>& y_k, const Matrix<Scalar>& c_mix, int k,
                               int embed_dim, MlpTrace<Scalar>* trace = nullptr) {
  check_shape(y_k.rows() == c_mix.rows() && y_k.cols() == c_mix.cols(), "denoiser y_k vs c_mix");
  const auto h = y_k.rows(), n = y_k.cols();
  check_shape(net.input_width() == 2 * h + embed_dim && net.output_width() == h, "denoiser widths");
  Matrix<Scalar> input(2 * h + embed_dim, n);
  input.topRows(h) = y_k;
  input.middleRows(h, h) = c_mix;
  input.bottomRows(embed_dim).colwise() = step_embedding<Scalar>(k, embed_dim);
  return net.forward(input, trace);
}

/// Returns dLoss/dc_mix (H x N).
template <typename Scalar>
Matrix<Scalar> denoise_backward(Mlp<Scalar>& net, const MlpTrace<Scalar>& trace, const Matrix<Scalar>& d_out) {
  const Matrix<Scalar> d_in = net.backward(trace, d_out);
  return d_in.middleRows(d_out.rows(), d_out.rows());
}

/// One ancestral reverse step. The noise term uses sqrt(beta_tilde_k) and vanishes at k = 1.
template <typename Scalar>
Matrix<Scalar> ddpm_step(const Matrix<Scalar>& y_k, int k, const Matrix<Scalar>& y0_hat, const NoiseSchedule& sched,
                         const Matrix<Scalar>& noise) {
  if (k < 1 || k > sched.steps()) throw InvariantError("ddpm_step: step index out of range");
  check_shape(y_k.rows() == y0_hat.rows() && y_k.cols() == y0_hat.cols(), "ddpm_step y_k vs y0_hat");
  Matrix<Scalar> out = static_cast<Scalar>(sched.posterior_xk_coef(k)) * y_k +
                       static_cast<Scalar>(sched.posterior_x0_coef(k)) * y0_hat;
  if (k > 1) {
    check_shape(noise.rows() == y_k.rows() && noise.cols() == y_k.cols(), "ddpm_step noise");
    out += static_cast<Scalar>(std::sqrt(sched.beta_tilde(k))) * noise;
  }
  return out;
}

/// The strided step subsequence visited by ddim_sample, ascending and ending at K.
inline std::vector<int> ddim_steps(int total_steps, int substeps) {
  if (substeps < 1 || substeps > total_steps) throw UsageError("substeps must lie in [1, K]");
  std::vector<int> taus;
  for (int i = 1; i <= substeps; ++i) taus.push_back(static_cast<int>((static_cast<long>(i) * total_steps) / substeps));
  return taus;
}

/// Deterministic (eta = 0) strided sampler started from the given y^K.
/// `predict(y, k)` returns the x0 estimate at step k.
template <typename Scalar, typename Predict>
Matrix<Scalar> ddim_sample_from(Predict&& predict, const NoiseSchedule& sched, int substeps, Matrix<Scalar> y) {
  const auto taus = ddim_steps(sched.steps(), substeps);
  for (std::size_t i = taus.size(); i-- > 0;) {
    const int t = taus[i];
    const int prev = i == 0 ? 0 : taus[i - 1];
    const Matrix<Scalar> x0 = predict(y, t);
    if (prev == 0) {
      y = x0;
      break;
    }
    const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(prev);
    const Matrix<Scalar> eps = (y - static_cast<Scalar>(std::sqrt(ab)) * x0) / static_cast<Scalar>(std::sqrt(1.0 - ab));
    y = static_cast<Scalar>(std::sqrt(ab_prev)) * x0 + static_cast<Scalar>(std::sqrt(1.0 - ab_prev)) * eps;
  }
  return y;
}

/// ddim_sample_from with y^K drawn from a standard normal.
template <typename Scalar, typename Predict>
Matrix<Scalar> ddim_sample(Predict&& predict, const NoiseSchedule& sched, int substeps, Eigen::Index rows,
                           Eigen::Index cols, Rng& rng) {
  ddim_steps(sched.steps(), substeps);
  return ddim_sample_from<Scalar>(std::forward<Predict>(predict), sched, substeps,
                                  standard_normal<Scalar>(rows, cols, rng));
}

/// Full K-step ancestral sampler built from ddpm_step.
template <typename Scalar, typename Predict>
Matrix<Scalar> ancestral_sample(Predict&& predict, const NoiseSchedule& sched, Eigen::Index rows, Eigen::Index cols,
                                Rng& rng) {
  Matrix<Scalar> y = standard_normal<Scalar>(rows, cols, rng);
  for (int k = sched.steps(); k >= 1; --k) {
    const Matrix<Scalar> x0 = predict(y, k);
    const Matrix<Scalar> noise = k > 1 ? standard_normal<Scalar>(rows, cols, rng) : Matrix<Scalar>();
    y = ddpm_step(y, k, x0, sched, noise);
  }
  return y;
}

}  // namespace bimdiff
