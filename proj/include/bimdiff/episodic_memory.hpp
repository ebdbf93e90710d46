#pragma once

#include "bimdiff/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <deque>
#include <numeric>
#include <span>
#include <vector>

namespace bimdiff {

/// Frozen special pattern plus its recall counter. `seq` orders records by arrival (smaller = older).
template <typename Scalar>
struct EpisodicRecord {
  Vector<Scalar> pattern;
  std::uint64_t freq = 0;
  std::uint64_t seq = 0;
};

template <typename Scalar>
struct EpisodicAttention {
  std::vector<int> indices;  // record indices of the top-k hits, best first
  Vector<Scalar> scores;     // cosine score per hit
  Vector<Scalar> weights;    // normalized attention per hit
  Vector<Scalar> value;      // recalled pattern m^e (zero when the store is empty)
};

/// Non-parametric store of special patterns: up to `capacity` entries plus a circular candidate
/// queue of up to `queue_capacity` fresh records. Records are addressed entries-first, then the
/// queue from head (newest) to tail (oldest). Both parts are visible to recall.
template <typename Scalar>
class EpisodicStore {
 public:
  using Record = EpisodicRecord<Scalar>;

  EpisodicStore() = default;
  EpisodicStore(int dim, int capacity, int queue_capacity, int top_k)
      : dim_(dim), capacity_(capacity), queue_capacity_(queue_capacity), top_k_(top_k) {
    if (dim < 1 || capacity < 1 || top_k < 1) throw UsageError("episodic store needs positive dim, capacity and top-k");
    if (queue_capacity < 0 || queue_capacity > capacity)
      throw UsageError("episodic queue capacity must satisfy 0 <= N3 <= N2");
  }

  int dim() const { return dim_; }
  int capacity() const { return capacity_; }
  int queue_capacity() const { return queue_capacity_; }
  int top_k() const { return top_k_; }
  std::uint64_t next_seq() const { return next_seq_; }

  const std::vector<Record>& entries() const { return entries_; }
  const std::deque<Record>& queue() const { return queue_; }
  bool empty() const { return entries_.empty() && queue_.empty(); }
  int record_count() const { return static_cast<int>(entries_.size() + queue_.size()); }

  const Record& record(int i) const {
    const auto n = static_cast<int>(entries_.size());
    return i < n ? entries_.at(static_cast<std::size_t>(i)) : queue_.at(static_cast<std::size_t>(i - n));
  }

  /// Top-k cosine attention over all records. Does not touch the frequency counters.
  EpisodicAttention<Scalar> attend(const Vector<Scalar>& query) const {
    check_shape(query.size() == dim_, "episodic recall query");
    EpisodicAttention<Scalar> a;
    a.value = Vector<Scalar>::Zero(dim_);
    if (empty()) {
      a.scores.resize(0);
      a.weights.resize(0);
      return a;
    }
    const int n = record_count();
    Vector<Scalar> all(n);
    for (int i = 0; i < n; ++i) all(i) = cosine_score(record(i).pattern, query);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const int k = std::min(top_k_, n);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int x, int y) {
      return all(x) > all(y) || (all(x) == all(y) && x < y);
    });
    a.indices.assign(order.begin(), order.begin() + k);
    a.scores.resize(k);
    for (int i = 0; i < k; ++i) a.scores(i) = all(a.indices[static_cast<std::size_t>(i)]);
    a.weights = normalize_scores(a.scores);
    for (int i = 0; i < k; ++i) a.value += a.weights(i) * record(a.indices[static_cast<std::size_t>(i)]).pattern;
    return a;
  }

  /// Adds one recall to each listed record.
  void touch(std::span<const int> indices) {
    const auto n = static_cast<int>(entries_.size());
    for (int i : indices) {
      if (i < 0 || i >= record_count()) throw InvariantError("episodic touch: record index out of range");
      if (i < n)
        ++entries_[static_cast<std::size_t>(i)].freq;
      else
        ++queue_[static_cast<std::size_t>(i - n)].freq;
    }
  }

  /// Recall that also counts the access.
  Vector<Scalar> recall(const Vector<Scalar>& query) {
    auto a = attend(query);
    touch(a.indices);
    return a.value;
  }

  /// Inserts one batch of k new special patterns.
  ///
  /// While entries are below capacity, patterns go straight into entries. Once full, records that
  /// overflow the queue tail are pooled with the entries, the pool is ranked by frequency
  /// (descending, older first on ties) and the top `capacity` survive; the new patterns are pushed
  /// at the queue head. All frequencies are zeroed afterwards.
  void update(std::span<const Vector<Scalar>> patterns) {
    const auto k = static_cast<int>(patterns.size());
    const int free_slots = capacity_ - static_cast<int>(entries_.size());
    if (k - free_slots > queue_capacity_)
      throw UsageError("episodic update of " + std::to_string(k) + " patterns exceeds queue capacity " +
                       std::to_string(queue_capacity_));
    std::size_t next = 0;
    while (next < patterns.size() && static_cast<int>(entries_.size()) < capacity_)
      entries_.push_back(make_record(patterns[next++]));

    if (next < patterns.size()) {
      const auto incoming = static_cast<int>(patterns.size() - next);
      const int overflow = std::max(0, static_cast<int>(queue_.size()) + incoming - queue_capacity_);
      std::vector<Record> pool(entries_.begin(), entries_.end());
      for (int i = 0; i < overflow; ++i) {
        pool.push_back(std::move(queue_.back()));
        queue_.pop_back();
      }
      if (overflow > 0) {
        std::stable_sort(pool.begin(), pool.end(), [](const Record& a, const Record& b) {
          return a.freq > b.freq || (a.freq == b.freq && a.seq < b.seq);
        });
        pool.resize(static_cast<std::size_t>(capacity_));
        std::sort(pool.begin(), pool.end(), [](const Record& a, const Record& b) { return a.seq < b.seq; });
        entries_ = std::move(pool);
      }
      for (; next < patterns.size(); ++next) queue_.push_front(make_record(patterns[next]));
    }
    for (auto& r : entries_) r.freq = 0;
    for (auto& r : queue_) r.freq = 0;
  }

  /// Replaces the full state, e.g. from a checkpoint.
  void restore(std::vector<Record> entries, std::deque<Record> queue, std::uint64_t next_seq) {
    if (static_cast<int>(entries.size()) > capacity_ || static_cast<int>(queue.size()) > queue_capacity_)
      throw DataError("episodic store snapshot exceeds capacity");
    for (const auto& r : entries) check_shape(r.pattern.size() == dim_, "episodic snapshot entry");
    for (const auto& r : queue) check_shape(r.pattern.size() == dim_, "episodic snapshot queue record");
    entries_ = std::move(entries);
    queue_ = std::move(queue);
    next_seq_ = next_seq;
  }

 private:
  Record make_record(const Vector<Scalar>& p) {
    check_shape(p.size() == dim_, "episodic pattern");
    if (!p.allFinite()) throw NumericError("episodic pattern is not finite");
    return Record{p, 0, next_seq_++};
  }

  int dim_ = 0, capacity_ = 0, queue_capacity_ = 0, top_k_ = 1;
  std::vector<Record> entries_;
  std::deque<Record> queue_;
  std::uint64_t next_seq_ = 0;
};

/// Gradient of the recalled value with respect to the query. Stored patterns are constants.
template <typename Scalar>
void recall_episodic_backward(const EpisodicStore<Scalar>& store, const Vector<Scalar>& query,
                              const EpisodicAttention<Scalar>& a, const Vector<Scalar>& d_value,
                              Eigen::Ref<Vector<std::type_identity_t<Scalar>>> d_query) {
  const auto k = static_cast<Eigen::Index>(a.indices.size());
  if (k == 0) return;
  Vector<Scalar> d_weights(k);
  for (Eigen::Index i = 0; i < k; ++i) d_weights(i) = store.record(a.indices[static_cast<std::size_t>(i)]).pattern.dot(d_value);
  const Vector<Scalar> d_scores = normalize_scores_backward(a.scores, a.weights, d_weights);
  Vector<Scalar> sink(store.dim());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (d_scores(i) == Scalar(0)) continue;
    sink.setZero();
    const Vector<Scalar>& p = store.record(a.indices[static_cast<std::size_t>(i)]).pattern;
    cosine_score_backward<Scalar>(p, query, a.scores(i), d_scores(i), sink, d_query);
  }
}

/// Index of the batch sample with the largest finite loss (lowest index on ties), or -1 when none is finite.
inline int select_special(std::span<const double> losses) {
  int best = -1;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i])) continue;
    if (best < 0 || losses[i] > losses[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

/// Channel query vectors of the hardest sample; empty when every loss is non-finite.
template <typename Scalar>
std::vector<Vector<Scalar>> select_special(std::span<const double> losses, std::span<const Matrix<Scalar>> queries) {
  if (losses.empty()) throw InvariantError("select_special: empty batch");
  check_shape(losses.size() == queries.size(), "select_special losses vs queries");
  const int best = select_special(losses);
  std::vector<Vector<Scalar>> out;
  if (best < 0) return out;
  const auto& q = queries[static_cast<std::size_t>(best)];
  for (Eigen::Index j = 0; j < q.cols(); ++j) out.emplace_back(q.col(j));
  return out;
}

}  // namespace bimdiff
