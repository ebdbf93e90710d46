#include <doctest.h>

#include "bimdiff/schedule.hpp"
#include "oracles.hpp"

#include <sstream>

using namespace bimdiff;

TEST_CASE("single explicit step") {
  const auto s = NoiseSchedule::from_betas({0.5});
  CHECK(s.steps() == 1);
  CHECK(s.alpha_bar(1) == 0.5);
  CHECK(s.beta_tilde(1) == 0.0);
  CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("two explicit steps match hand arithmetic") {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2});
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(s.beta_tilde(2) == doctest::Approx((1 - 0.9) / (1 - 0.72) * 0.2).epsilon(1e-14));
  CHECK(s.beta_tilde(1) == 0.0);
}

TEST_CASE("generated schedules satisfy the invariants") {
  for (int steps : {1, 2, 4, 10, 50, 1000}) {
    const auto s = make_schedule(steps);
    CHECK(s.steps() == steps);
    CHECK(s.prior_matched());
    CHECK(s.alpha_bar(steps) == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(s.beta_tilde(1) == 0.0);
    for (int k = 1; k <= steps; ++k) {
      CHECK(s.beta(k) > 0.0);
      CHECK(s.beta(k) < 1.0);
      CHECK(s.alpha_bar(k) < s.alpha_bar(k - 1));
    }
  }
  ScheduleOptions lin;
  lin.kind = ScheduleKind::Linear;
  lin.beta_min = 1e-4;
  lin.beta_max = 0.5;
  const auto s = make_schedule(10, lin);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(10) == doctest::Approx(0.5));
  CHECK(s.prior_matched());
}

TEST_CASE("schedule rejects bad input") {
  CHECK_THROWS_AS(make_schedule(0), UsageError);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({}), UsageError);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({0.0}), UsageError);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({1.0}), UsageError);
  ScheduleOptions lin;
  lin.kind = ScheduleKind::Linear;
  lin.beta_max = 0.01;
  CHECK_THROWS_AS(make_schedule(10, lin), UsageError);
  CHECK_THROWS_AS(parse_schedule_kind("cosine"), UsageError);
  CHECK(parse_schedule_kind(to_string(ScheduleKind::Linear)) == ScheduleKind::Linear);
  const auto s = make_schedule(3);
  CHECK_THROWS_AS(s.beta(0), InvariantError);
  CHECK_THROWS_AS(s.beta(4), InvariantError);
}

TEST_CASE("forward_sample closed form") {
  const auto s = make_schedule(10);
  const MatrixXd zero = MatrixXd::Zero(3, 2);
  Rng rng(3);
  const MatrixXd n = standard_normal<double>(3, 2, rng);
  for (int k = 1; k <= 10; ++k) {
    const MatrixXd out = forward_sample(zero, k, n, s);
    CHECK((out - std::sqrt(1.0 - s.alpha_bar(k)) * n).cwiseAbs().maxCoeff() == 0.0);
  }
  // Near-zero noise limit: alpha_bar -> 1 returns x0.
  const auto tiny = NoiseSchedule::from_betas({1e-300});
  const MatrixXd x0 = standard_normal<double>(3, 2, rng);
  CHECK((forward_sample(x0, 1, n, tiny) - x0).cwiseAbs().maxCoeff() < 1e-140);
  CHECK_THROWS_AS(forward_sample(x0, 0, n, s), InvariantError);
  CHECK_THROWS_AS(forward_sample(x0, 1, MatrixXd(MatrixXd::Zero(2, 2)), s), InvariantError);

  Rng a(42), b(42);
  const MatrixXd na = standard_normal<double>(4, 4, a), nb = standard_normal<double>(4, 4, b);
  const MatrixXd x4 = standard_normal<double>(4, 4, rng);
  CHECK(forward_sample(x4, 5, na, s) == forward_sample(x4, 5, nb, s));
}

TEST_CASE("composed one-step kernels match the marginal (K = 3)") {
  const auto s = make_schedule(3);
  std::vector<double> betas;
  for (int k = 1; k <= 3; ++k) betas.push_back(s.beta(k));
  const auto mc = oracle::composed_forward_moments(betas, 1.0, 100000, 11);
  for (int k = 1; k <= 3; ++k) {
    const double mean = std::sqrt(s.alpha_bar(k));
    const double var = 1.0 - s.alpha_bar(k);
    CHECK(std::abs(mc[static_cast<std::size_t>(k)].mean - mean) < 3 * mc[static_cast<std::size_t>(k)].mean_se);
    CHECK(std::abs(mc[static_cast<std::size_t>(k)].variance - var) < 3 * mc[static_cast<std::size_t>(k)].variance_se);
  }
}

TEST_CASE("posterior moments") {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2});
  MatrixXd x0(1, 1), xk(1, 1);
  x0 << 0.7;
  xk << -1.3;
  const auto ref = oracle::bayes_posterior({0.1, 0.2}, 2, 0.7, -1.3);
  const auto p = posterior_mean_var(x0, xk, 2, s);
  CHECK(std::abs(p.mean(0, 0) - ref.mean) < 1e-10);
  CHECK(std::abs(p.variance - ref.variance) < 1e-10);

  const auto p1 = posterior_mean_var(x0, xk, 1, s);
  CHECK(p1.mean(0, 0) == 0.7);
  CHECK(p1.variance == 0.0);
  CHECK(s.posterior_x0_coef(1) == 1.0);
  CHECK(s.posterior_xk_coef(1) == 0.0);

  const MatrixXd z = MatrixXd::Zero(2, 3);
  CHECK(posterior_mean_var(z, z, 2, s).mean.isZero(0.0));
  CHECK_THROWS_AS(posterior_mean_var(z, z, 3, s), InvariantError);
}

TEST_CASE("posterior coefficients on a repeated value") {
  for (int steps : {2, 5, 10}) {
    const auto s = make_schedule(steps);
    for (int k = 1; k <= steps; ++k) {
      CHECK(s.posterior_xk_coef(k) >= 0.0);
      CHECK(s.posterior_x0_coef(k) >= 0.0);
      const double v = 2.5;
      MatrixXd m = MatrixXd::Constant(1, 1, v);
      const double abar_prev = s.alpha_bar(k - 1);
      const double expected =
          v * (std::sqrt(s.alpha(k)) * (1 - abar_prev) + std::sqrt(abar_prev) * s.beta(k)) / (1 - s.alpha_bar(k));
      CHECK(posterior_mean_var(m, m, k, s).mean(0, 0) == doctest::Approx(expected).epsilon(1e-13));
    }
  }
}

TEST_CASE("schedule csv dump") {
  std::ostringstream os;
  NoiseSchedule::from_betas({0.1, 0.2}).write_csv(os);
  CHECK(os.str().rfind("k,beta,alpha,alpha_bar,beta_tilde\n1,0.1", 0) == 0);
}
