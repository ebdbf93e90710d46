#include "bimdiff/schedule.hpp"

#include <cmath>
#include <ostream>

namespace bimdiff {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear-scaled") return ScheduleKind::LinearScaled;
  if (name == "linear") return ScheduleKind::Linear;
  throw UsageError("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::LinearScaled ? "linear-scaled" : "linear";
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw UsageError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  const auto n = s.beta_.size();
  s.alpha_.resize(n);
  s.alpha_bar_.resize(n);
  s.beta_tilde_.resize(n);
  double prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = s.beta_[i];
    if (!(b > 0.0 && b < 1.0)) throw UsageError("noise schedule beta must lie in (0,1)");
    s.alpha_[i] = 1.0 - b;
    const double prev = prod;
    prod *= s.alpha_[i];
    s.alpha_bar_[i] = prod;
    s.beta_tilde_[i] = (1.0 - prev) / (1.0 - prod) * b;
  }
  return s;
}

std::size_t NoiseSchedule::index(int k) const {
  if (k < 1 || k > steps()) throw InvariantError("schedule step " + std::to_string(k) + " out of range");
  return static_cast<std::size_t>(k - 1);
}

// At k = 1, alpha_bar(0) = 1 makes the coefficients exactly 0 and 1; computing them through
// 1 - (1 - beta) would round.
double NoiseSchedule::posterior_xk_coef(int k) const {
  if (k == 1) return 0.0;
  return std::sqrt(alpha(k)) * (1.0 - alpha_bar(k - 1)) / (1.0 - alpha_bar(k));
}

double NoiseSchedule::posterior_x0_coef(int k) const {
  if (k == 1) return 1.0;
  return std::sqrt(alpha_bar(k - 1)) * beta(k) / (1.0 - alpha_bar(k));
}

void NoiseSchedule::write_csv(std::ostream& os) const {
  os << "k,beta,alpha,alpha_bar,beta_tilde\n";
  os.precision(17);
  for (int k = 1; k <= steps(); ++k)
    os << k << ',' << beta(k) << ',' << alpha(k) << ',' << alpha_bar(k) << ',' << beta_tilde(k) << '\n';
}

namespace {

std::vector<double> linear_betas(int steps, double lo, double hi) {
  std::vector<double> b(static_cast<std::size_t>(steps));
  if (steps == 1) {
    b[0] = hi;
    return b;
  }
  for (int i = 0; i < steps; ++i) b[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (steps - 1);
  return b;
}

double log_alpha_bar_end(const std::vector<double>& betas) {
  double s = 0.0;
  for (double b : betas) s += std::log1p(-b);
  return s;
}

}  // namespace

NoiseSchedule make_schedule(int steps, const ScheduleOptions& opts) {
  if (steps < 1) throw UsageError("schedule steps must be >= 1");
  if (!(opts.beta_min > 0.0 && opts.beta_min < 1.0)) throw UsageError("beta_min must lie in (0,1)");
  if (opts.kind == ScheduleKind::Linear) {
    auto s = NoiseSchedule::from_betas(linear_betas(steps, opts.beta_min, opts.beta_max));
    if (!s.prior_matched())
      throw UsageError("linear schedule leaves alpha_bar_K >= 0.05; raise beta_max or steps");
    return s;
  }
  if (!(opts.alpha_bar_end > 0.0 && opts.alpha_bar_end < 0.05))
    throw UsageError("alpha_bar_end must lie in (0, 0.05)");
  // alpha_bar_K decreases monotonically in beta_max, so bisect on it.
  const double target = std::log(opts.alpha_bar_end);
  double lo = opts.beta_min, hi = 1.0 - 1e-12;
  if (log_alpha_bar_end(linear_betas(steps, opts.beta_min, hi)) > target)
    throw UsageError("cannot reach alpha_bar_end with " + std::to_string(steps) + " steps");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (log_alpha_bar_end(linear_betas(steps, opts.beta_min, mid)) > target)
      lo = mid;
    else
      hi = mid;
  }
  return NoiseSchedule::from_betas(linear_betas(steps, opts.beta_min, hi));
}

}  // namespace bimdiff
