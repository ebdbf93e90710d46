#pragma once

#include "bimdiff/types.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bimdiff {

enum class ScheduleKind {
  // Linear β ramp from beta_min; beta_max solved so that alpha_bar at K hits the target.
  LinearScaled,
  // Linear β ramp between the given beta_min and beta_max.
  Linear,
};

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

struct ScheduleOptions {
  ScheduleKind kind = ScheduleKind::LinearScaled;
  double beta_min = 1e-4;
  double beta_max = 0.5;           // used by ScheduleKind::Linear only
  double alpha_bar_end = 0.01;     // endpoint targeted by LinearScaled
};

/// Discrete diffusion noise schedule. Steps are 1-based; alpha_bar(0) == 1.
/// Immutable after construction.
class NoiseSchedule {
 public:
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int k) const { return beta_.at(index(k)); }
  double alpha(int k) const { return alpha_.at(index(k)); }
  double alpha_bar(int k) const { return k == 0 ? 1.0 : alpha_bar_.at(index(k)); }
  double beta_tilde(int k) const { return beta_tilde_.at(index(k)); }

  /// Whether the endpoint is close enough to a standard normal prior (alpha_bar(K) < 0.05).
  bool prior_matched() const { return alpha_bar(steps()) < 0.05; }

  /// Coefficients of the posterior mean: mean = xk_coef * x^k + x0_coef * x^0.
  double posterior_xk_coef(int k) const;
  double posterior_x0_coef(int k) const;

  void write_csv(std::ostream& os) const;

 private:
  std::size_t index(int k) const;

  std::vector<double> beta_, alpha_, alpha_bar_, beta_tilde_;
};

NoiseSchedule make_schedule(int steps, const ScheduleOptions& opts = {});

/// Closed-form forward marginal: sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) noise.
template <typename Derived, typename NoiseDerived>
auto forward_sample(const Eigen::MatrixBase<Derived>& x0, int k,
                    const Eigen::MatrixBase<NoiseDerived>& noise, const NoiseSchedule& sched) {
  using Scalar = typename Derived::Scalar;
  if (k < 1 || k > sched.steps()) throw InvariantError("forward_sample: step index out of range");
  check_shape(x0.rows() == noise.rows() && x0.cols() == noise.cols(), "forward_sample x0 vs noise");
  const auto ab = sched.alpha_bar(k);
  Matrix<Scalar> out = static_cast<Scalar>(std::sqrt(ab)) * x0 +
                       static_cast<Scalar>(std::sqrt(1.0 - ab)) * noise;
  return out;
}

template <typename Scalar>
struct PosteriorMoments {
  Matrix<Scalar> mean;
  double variance = 0.0;
};

/// Mean and variance of q(x^{k-1} | x^k, x^0).
template <typename Derived, typename OtherDerived>
auto posterior_mean_var(const Eigen::MatrixBase<Derived>& x0, const Eigen::MatrixBase<OtherDerived>& xk,
                        int k, const NoiseSchedule& sched) {
  using Scalar = typename Derived::Scalar;
  if (k < 1 || k > sched.steps()) throw InvariantError("posterior_mean_var: step index out of range");
  check_shape(x0.rows() == xk.rows() && x0.cols() == xk.cols(), "posterior_mean_var x0 vs xk");
  PosteriorMoments<Scalar> out;
  out.mean = static_cast<Scalar>(sched.posterior_xk_coef(k)) * xk +
             static_cast<Scalar>(sched.posterior_x0_coef(k)) * x0;
  out.variance = sched.beta_tilde(k);
  return out;
}

}  // namespace bimdiff
