#pragma once

#include "bimdiff/types.hpp"

#include <cmath>

namespace bimdiff {

/// Offset added to clamped scores before normalizing, so weights stay defined when every score is <= 0.
inline constexpr double kScoreEpsilon = 1e-8;

/// Cosine similarity. Throws std::domain_error on a zero-norm argument.
template <typename A, typename B>
typename A::Scalar cosine_score(const Eigen::MatrixBase<A>& block, const Eigen::MatrixBase<B>& query) {
  using Scalar = typename A::Scalar;
  check_shape(block.size() == query.size(), "cosine_score operands");
  const Scalar nb = block.norm(), nq = query.norm();
  if (!(nb > Scalar(0)) || !(nq > Scalar(0))) throw std::domain_error("cosine_score: zero-norm vector");
  return block.dot(query) / (nb * nq);
}

/// Adds g * d cos(a,b)/da to da and g * d cos(a,b)/db to db, given s = cos(a,b).
template <typename Scalar>
void cosine_score_backward(const Vector<Scalar>& a, const Vector<Scalar>& b, Scalar s, Scalar g,
                           Eigen::Ref<Vector<std::type_identity_t<Scalar>>> da, Eigen::Ref<Vector<std::type_identity_t<Scalar>>> db) {
  const Scalar na = a.norm(), nb = b.norm();
  const Scalar inv = g / (na * nb);
  da += inv * b - (g * s / (na * na)) * a;
  db += inv * a - (g * s / (nb * nb)) * b;
}

/// Clamp-at-zero, add epsilon, normalize to a convex combination.
template <typename Scalar>
Vector<Scalar> normalize_scores(const Vector<Scalar>& scores) {
  Vector<Scalar> u = scores.cwiseMax(Scalar(0)).array() + static_cast<Scalar>(kScoreEpsilon);
  return u / u.sum();
}

/// Backpropagates dL/dweights through normalize_scores into dL/dscores.
template <typename Scalar>
Vector<Scalar> normalize_scores_backward(const Vector<Scalar>& scores, const Vector<Scalar>& weights,
                                         const Vector<Scalar>& d_weights) {
  const Scalar total = (scores.cwiseMax(Scalar(0)).array() + static_cast<Scalar>(kScoreEpsilon)).sum();
  const Scalar centre = weights.dot(d_weights);
  Vector<Scalar> d_scores = (d_weights.array() - centre) / total;
  return d_scores.cwiseProduct((scores.array() > Scalar(0)).template cast<Scalar>().matrix());
}

}  // namespace bimdiff
