#include <doctest.h>

#include "bimdiff/nn.hpp"
#include "episodic_fuzz.hpp"
#include "episodic_scenario.hpp"

using namespace bimdiff;

namespace {

VectorXd unit_at(double cosine) {
  VectorXd v(2);
  v << cosine, std::sqrt(1.0 - cosine * cosine);
  return v;
}

}  // namespace

TEST_CASE("empty store recalls zero") {
  EpisodicStore<double> s(3, 4, 2, 2);
  const VectorXd q = VectorXd::Ones(3);
  CHECK(s.recall(q).isZero(0.0));
  CHECK(s.attend(q).indices.empty());
}

TEST_CASE("single entry is returned with its frequency incremented") {
  EpisodicStore<double> s(2, 4, 2, 3);
  const VectorXd p = unit_at(0.3) * 2.0;
  s.update(std::vector<VectorXd>{p});
  VectorXd q(2);
  q << -1.0, 0.2;
  CHECK(s.recall(q) == p);
  CHECK(s.entries()[0].freq == 1);
}

TEST_CASE("top-k weighted by clamped scores") {
  EpisodicStore<double> s(2, 4, 2, 2);
  const VectorXd a = unit_at(0.9), b = unit_at(0.5), c = unit_at(0.1);
  s.update(std::vector<VectorXd>{c, a});
  s.update(std::vector<VectorXd>{b});
  const VectorXd q = VectorXd::Unit(2, 0);
  const auto att = s.attend(q);
  CHECK(att.indices == std::vector<int>{1, 2});
  const double eps = kScoreEpsilon;
  const VectorXd expected = ((0.9 + eps) * a + (0.5 + eps) * b) / (1.4 + 2 * eps);
  CHECK((att.value - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(att.weights(0) == doctest::Approx(0.9 / 1.4).epsilon(1e-7));

  s.recall(q);
  CHECK(s.entries()[0].freq == 0);
  CHECK(s.entries()[1].freq == 1);
  CHECK(s.entries()[2].freq == 1);
}

TEST_CASE("recall is deterministic") {
  Rng rng(1);
  EpisodicStore<double> a(4, 6, 3, 3);
  for (int i = 0; i < 4; ++i) {
    std::vector<VectorXd> batch{standard_normal<double>(4, 1, rng), standard_normal<double>(4, 1, rng)};
    a.update(batch);
  }
  EpisodicStore<double> b = a;
  const VectorXd q = standard_normal<double>(4, 1, rng);
  CHECK(a.recall(q) == b.recall(q));
  for (int i = 0; i < a.record_count(); ++i) CHECK(a.record(i).freq == b.record(i).freq);
  CHECK_THROWS_AS(a.recall(VectorXd(VectorXd::Zero(4))), std::domain_error);
}

TEST_CASE("filling phase leaves the queue untouched") {
  EpisodicStore<double> s(2, 4, 2, 1);
  s.update(std::vector<VectorXd>{unit_at(0.1), unit_at(0.2)});
  s.update(std::vector<VectorXd>{unit_at(0.3)});
  CHECK(s.entries().size() == 3);
  CHECK(s.queue().empty());
  // The fourth pattern completes the entries; the fifth spills into the queue.
  s.update(std::vector<VectorXd>{unit_at(0.4), unit_at(0.5)});
  CHECK(s.entries().size() == 4);
  CHECK(s.queue().size() == 1);
  CHECK(s.queue().front().seq == 4);
}

TEST_CASE("scripted update scenario matches the hand simulation") {
  const auto failure = scenario::run();
  CHECK_MESSAGE(failure.empty(), failure);
}

TEST_CASE("frequent entries survive unrecalled queue records") {
  EpisodicStore<double> s(2, 3, 2, 3);
  s.update(std::vector<VectorXd>{unit_at(0.1), unit_at(0.2), unit_at(0.3)});
  s.update(std::vector<VectorXd>{unit_at(0.4), unit_at(0.5)});
  for (int i = 0; i < 3; ++i) s.touch(std::vector<int>{i});
  const auto before = s.entries();
  s.update(std::vector<VectorXd>{unit_at(0.6), unit_at(0.7)});
  REQUIRE(s.entries().size() == before.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(s.entries()[i].pattern == before[i].pattern);
}

TEST_CASE("update size is bounded by the queue") {
  EpisodicStore<double> s(2, 2, 1, 1);
  s.update(std::vector<VectorXd>{unit_at(0.1), unit_at(0.2)});
  CHECK_THROWS_AS(s.update(std::vector<VectorXd>{unit_at(0.3), unit_at(0.4)}), UsageError);
  CHECK_THROWS_AS(EpisodicStore<double>(2, 2, 3, 1), UsageError);
  VectorXd bad = unit_at(0.5);
  bad(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(s.update(std::vector<VectorXd>{bad}), NumericError);
}

TEST_CASE("randomized operation sequences keep the invariants") {
  struct Shape {
    int n2, n3, k;
  };
  for (const auto& sh : {Shape{4, 2, 2}, Shape{6, 4, 2}, Shape{9, 6, 3}, Shape{5, 5, 1}, Shape{7, 5, 2}, Shape{8, 7, 3}}) {
    const auto rep = fuzz::run(sh.n2, sh.n3, sh.k, 2, 10000, 99);
    CHECK_MESSAGE(rep.failure.empty(), rep.failure);
    CHECK(rep.updates > 1000);
  }
}

TEST_CASE("special-pattern selection") {
  const std::vector<double> losses{0.1, 0.9, 0.3};
  CHECK(select_special(losses) == 1);
  CHECK(select_special(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(select_special(std::vector<double>{0.2}) == 0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(select_special(std::vector<double>{nan, 0.1, std::numeric_limits<double>::infinity()}) == 1);
  CHECK(select_special(std::vector<double>{nan}) == -1);

  std::vector<MatrixXd> queries{MatrixXd::Constant(2, 3, 1.0), MatrixXd::Constant(2, 3, 2.0),
                                MatrixXd::Constant(2, 3, 3.0)};
  const auto picked = select_special<double>(losses, queries);
  REQUIRE(picked.size() == 3);
  for (const auto& p : picked) CHECK(p == VectorXd::Constant(2, 2.0));
  CHECK(select_special<double>(std::vector<double>{nan, nan}, std::vector<MatrixXd>(2, MatrixXd::Ones(2, 1))).empty());
  CHECK_THROWS_AS(select_special<double>(std::vector<double>{}, std::vector<MatrixXd>{}), InvariantError);
}

TEST_CASE("episodic query gradient matches finite differences") {
  Rng rng(7);
  EpisodicStore<double> s(4, 6, 3, 3);
  for (int i = 0; i < 3; ++i) {
    std::vector<VectorXd> batch{standard_normal<double>(4, 1, rng), standard_normal<double>(4, 1, rng)};
    s.update(batch);
  }
  ParamTensor<double> q("q", 4, 1);
  q.values = standard_normal<double>(4, 1, rng);
  const VectorXd probe = standard_normal<double>(4, 1, rng);
  const auto a = s.attend(VectorXd(q.values.col(0)));
  recall_episodic_backward(s, VectorXd(q.values.col(0)), a, probe, q.grad.col(0));
  const auto rep = finite_diff_check<double>([&] { return s.attend(VectorXd(q.values.col(0))).value.dot(probe); },
                                             {&q}, {1e-6, 1e-5, 1e-4});
  CHECK_MESSAGE(rep.passed, rep.max_rel_error, " a=", rep.worst_analytic, " n=", rep.worst_numeric);
}
