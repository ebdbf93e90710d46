#pragma once

#include "bimdiff/data.hpp"
#include "bimdiff/model.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace bimdiff {

// Layout (all integers little-endian):
//   "BIMDIFF\0"  u32 version  u32 scalar_bytes
//   str config_text
//   u64 n  f64[n] mean  f64[n] stddev                  (normalizer; n = 0 when absent)
//   u64 tensors { str id  u32 ndims  u64[ndims] dims  scalar[prod(dims)] values (column-major) }
//   u64 stores  { u64 next_seq  u64 n_entries {u64 seq u64 freq scalar[d]}  u64 n_queue {...head to tail} }
// where str = u64 length + bytes.
inline constexpr char kCheckpointMagic[8] = {'B', 'I', 'M', 'D', 'I', 'F', 'F', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  U bits;
  std::memcpy(&bits, &v, sizeof bits);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf, sizeof buf);
}

template <typename T>
T get(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof buf)) throw DataError("checkpoint truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void put_str(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw DataError("checkpoint string length is implausible");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

template <typename Scalar, typename Derived>
void put_values(std::ostream& os, const Eigen::DenseBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put<Scalar>(os, m.derived().data()[i]);
}

template <typename Scalar>
void put_record(std::ostream& os, const EpisodicRecord<Scalar>& r) {
  put<std::uint64_t>(os, r.seq);
  put<std::uint64_t>(os, r.freq);
  put_values<Scalar>(os, r.pattern);
}

template <typename Scalar>
EpisodicRecord<Scalar> get_record(std::istream& is, int dim) {
  EpisodicRecord<Scalar> r;
  r.seq = get<std::uint64_t>(is);
  r.freq = get<std::uint64_t>(is);
  r.pattern.resize(dim);
  for (int i = 0; i < dim; ++i) r.pattern(i) = get<Scalar>(is);
  return r;
}

}  // namespace detail

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  std::string config_text;
  NormStats stats;
};

template <typename Scalar>
void save_checkpoint(std::ostream& os, BimDiffModel<Scalar>& model, const std::string& config_text,
                     const NormStats* stats) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, sizeof(Scalar));
  detail::put_str(os, config_text);
  const auto n = stats ? static_cast<std::uint64_t>(stats->mean.size()) : 0;
  detail::put<std::uint64_t>(os, n);
  if (n) {
    detail::put_values<double>(os, stats->mean);
    detail::put_values<double>(os, stats->stddev);
  }
  const auto params = model.params();
  detail::put<std::uint64_t>(os, params.size());
  for (const auto* p : params) {
    detail::put_str(os, p->id);
    const auto shape = p->shape();
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto s : shape) detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(s));
    detail::put_values<Scalar>(os, p->values);
  }
  const auto& stores = model.memory().episodic;
  detail::put<std::uint64_t>(os, stores.size());
  for (const auto& st : stores) {
    detail::put<std::uint64_t>(os, st.next_seq());
    detail::put<std::uint64_t>(os, st.entries().size());
    for (const auto& r : st.entries()) detail::put_record(os, r);
    detail::put<std::uint64_t>(os, st.queue().size());
    for (const auto& r : st.queue()) detail::put_record(os, r);
  }
  if (!os) throw DataError("failed writing checkpoint");
}

inline CheckpointHeader read_checkpoint_header(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file");
  CheckpointHeader h;
  h.version = detail::get<std::uint32_t>(is);
  if (h.version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(h.version));
  h.scalar_bytes = detail::get<std::uint32_t>(is);
  h.config_text = detail::get_str(is);
  const auto n = detail::get<std::uint64_t>(is);
  h.stats.mean.resize(static_cast<Eigen::Index>(n));
  h.stats.stddev.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) h.stats.mean(static_cast<Eigen::Index>(i)) = detail::get<double>(is);
  for (std::uint64_t i = 0; i < n; ++i) h.stats.stddev(static_cast<Eigen::Index>(i)) = detail::get<double>(is);
  return h;
}

/// Loads tensors and episodic stores into a model built from the same configuration.
/// Call after read_checkpoint_header on the same stream.
template <typename Scalar>
void load_checkpoint_body(std::istream& is, const CheckpointHeader& header, BimDiffModel<Scalar>& model) {
  if (header.scalar_bytes != sizeof(Scalar)) throw DataError("checkpoint precision does not match the model");
  auto params = model.params();
  const auto count = detail::get<std::uint64_t>(is);
  if (count != params.size()) throw DataError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                                              std::to_string(params.size()));
  for (auto* p : params) {
    const auto id = detail::get_str(is);
    if (id != p->id) throw DataError("checkpoint tensor '" + id + "' where '" + p->id + "' was expected");
    const auto ndims = detail::get<std::uint32_t>(is);
    const auto shape = p->shape();
    if (ndims != shape.size()) throw DataError("checkpoint tensor '" + id + "' has the wrong rank");
    for (auto s : shape)
      if (detail::get<std::uint64_t>(is) != static_cast<std::uint64_t>(s))
        throw DataError("checkpoint tensor '" + id + "' has the wrong shape");
    for (Eigen::Index i = 0; i < p->size(); ++i) p->values.data()[i] = detail::get<Scalar>(is);
  }
  auto& stores = model.memory().episodic;
  if (detail::get<std::uint64_t>(is) != stores.size()) throw DataError("checkpoint episodic store count mismatch");
  for (auto& st : stores) {
    const auto next = detail::get<std::uint64_t>(is);
    const auto n_entries = detail::get<std::uint64_t>(is);
    if (n_entries > static_cast<std::uint64_t>(st.capacity())) throw DataError("checkpoint episodic entries exceed capacity");
    std::vector<EpisodicRecord<Scalar>> entries(n_entries);
    for (auto& r : entries) r = detail::get_record<Scalar>(is, st.dim());
    const auto n_queue = detail::get<std::uint64_t>(is);
    if (n_queue > static_cast<std::uint64_t>(st.queue_capacity())) throw DataError("checkpoint episodic queue exceeds capacity");
    std::deque<EpisodicRecord<Scalar>> queue(n_queue);
    for (auto& r : queue) r = detail::get_record<Scalar>(is, st.dim());
    st.restore(std::move(entries), std::move(queue), next);
  }
}

}  // namespace bimdiff
