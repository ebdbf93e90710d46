#pragma once

#include "bimdiff/attention.hpp"
#include "bimdiff/nn.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace bimdiff {

/// Learnable general-pattern blocks shared across channels. Column i of `blocks` is block i.
template <typename Scalar>
struct SemanticMemory {
  ParamTensor<Scalar> blocks;

  SemanticMemory() = default;
  SemanticMemory(const std::string& name, int dim, int count) : blocks(name, dim, count) {
    if (dim < 1 || count < 1) throw UsageError("semantic memory needs positive dimension and block count");
  }

  int dim() const { return static_cast<int>(blocks.values.rows()); }
  int count() const { return static_cast<int>(blocks.values.cols()); }

  void init_normal(Rng& rng) { blocks.values = standard_normal<Scalar>(dim(), count(), rng); }

  /// Redraws blocks whose norm collapsed below 1e-8. Returns how many were redrawn.
  int rejitter(Rng& rng) {
    int redrawn = 0;
    for (int i = 0; i < count(); ++i) {
      if (blocks.values.col(i).norm() < static_cast<Scalar>(1e-8)) {
        blocks.values.col(i) = standard_normal<Scalar>(dim(), 1, rng);
        ++redrawn;
      }
    }
    return redrawn;
  }
};

template <typename Scalar>
struct SemanticRecall {
  Vector<Scalar> scores;   // cosine score per block
  Vector<Scalar> weights;  // normalized attention per block
  Vector<Scalar> value;    // recalled pattern m^s
};

template <typename Scalar>
SemanticRecall<Scalar> recall_semantic(const SemanticMemory<Scalar>& mem, const Vector<Scalar>& query) {
  check_shape(query.size() == mem.dim(), "semantic recall query");
  SemanticRecall<Scalar> r;
  r.scores.resize(mem.count());
  for (int i = 0; i < mem.count(); ++i) r.scores(i) = cosine_score(mem.blocks.values.col(i), query);
  r.weights = normalize_scores(r.scores);
  r.value = mem.blocks.values * r.weights;
  return r;
}

/// Accumulates block gradients into mem.blocks.grad and the query gradient into d_query.
template <typename Scalar>
void recall_semantic_backward(SemanticMemory<Scalar>& mem, const Vector<Scalar>& query,
                              const SemanticRecall<Scalar>& r, const Vector<Scalar>& d_value,
                              Eigen::Ref<Vector<std::type_identity_t<Scalar>>> d_query) {
  mem.blocks.grad.noalias() += d_value * r.weights.transpose();
  const Vector<Scalar> d_weights = mem.blocks.values.transpose() * d_value;
  const Vector<Scalar> d_scores = normalize_scores_backward(r.scores, r.weights, d_weights);
  for (int i = 0; i < mem.count(); ++i) {
    if (d_scores(i) == Scalar(0)) continue;
    Vector<Scalar> block = mem.blocks.values.col(i);
    cosine_score_backward<Scalar>(block, query, r.scores(i), d_scores(i), mem.blocks.grad.col(i), d_query);
  }
}

/// Consistency and contrastive terms for one query.
template <typename Scalar>
struct SemanticLossTerms {
  int nearest = -1;
  int second = -1;       // -1 when the memory has a single block
  Scalar consistency = 0;  // ||h - M_nearest||^2
  Scalar contrastive = 0;  // max(d1 - d2 + margin, 0)
  bool hinge_active = false;
};

/// Block indices ordered by descending cosine score; ties keep the lower index first.
template <typename Scalar>
std::vector<int> rank_by_score(const Vector<Scalar>& scores) {
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  return order;
}

template <typename Scalar>
SemanticLossTerms<Scalar> semantic_loss_terms(const SemanticMemory<Scalar>& mem, const Vector<Scalar>& query,
                                              const Vector<Scalar>& scores, Scalar margin) {
  SemanticLossTerms<Scalar> t;
  const auto order = rank_by_score(scores);
  t.nearest = order[0];
  t.consistency = (query - mem.blocks.values.col(t.nearest)).squaredNorm();
  if (order.size() >= 2) {
    t.second = order[1];
    const Scalar d2 = (query - mem.blocks.values.col(t.second)).squaredNorm();
    const Scalar gap = t.consistency - d2 + margin;
    t.hinge_active = gap > Scalar(0);
    t.contrastive = t.hinge_active ? gap : Scalar(0);
  }
  return t;
}

/// Sums of the consistency (L1) and contrastive (L2) terms over the columns of `queries`.
template <typename Scalar>
std::pair<Scalar, Scalar> semantic_losses(const SemanticMemory<Scalar>& mem, const Matrix<Scalar>& queries,
                                          Scalar margin) {
  Scalar l1 = 0, l2 = 0;
  for (Eigen::Index j = 0; j < queries.cols(); ++j) {
    const Vector<Scalar> h = queries.col(j);
    const auto r = recall_semantic(mem, h);
    const auto t = semantic_loss_terms(mem, h, r.scores, margin);
    l1 += t.consistency;
    l2 += t.contrastive;
  }
  return {l1, l2};
}

/// Gradient of w1 * consistency + w2 * contrastive. Block selection is piecewise constant.
template <typename Scalar>
void semantic_loss_backward(SemanticMemory<Scalar>& mem, const Vector<Scalar>& query,
                            const SemanticLossTerms<Scalar>& t, Scalar w1, Scalar w2,
                            Eigen::Ref<Vector<std::type_identity_t<Scalar>>> d_query) {
  const Vector<Scalar> diff1 = query - mem.blocks.values.col(t.nearest);
  Scalar g1 = w1;
  if (t.hinge_active) {
    g1 += w2;
    const Vector<Scalar> diff2 = query - mem.blocks.values.col(t.second);
    d_query -= (Scalar(2) * w2) * diff2;
    mem.blocks.grad.col(t.second) += (Scalar(2) * w2) * diff2;
  }
  d_query += (Scalar(2) * g1) * diff1;
  mem.blocks.grad.col(t.nearest) -= (Scalar(2) * g1) * diff1;
}

}  // namespace bimdiff
