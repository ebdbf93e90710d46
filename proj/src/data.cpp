#include "bimdiff/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace bimdiff {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\"");
  auto e = s.find_last_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

enum class Cell { Number, Missing, Invalid };

Cell parse_cell(const std::string& text, double& value) {
  if (text.empty()) return Cell::Missing;
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "nan" || lower == "na" || lower == "null") return Cell::Missing;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return Cell::Invalid;
  if (std::isnan(value)) return Cell::Missing;
  if (!std::isfinite(value)) return Cell::Invalid;
  return Cell::Number;
}

bool looks_like_time_header(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return name == "date" || name == "time" || name == "timestamp" || name == "datetime";
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& name) {
  Dataset ds;
  ds.name = name;
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw DataError("csv has no header row");

  std::vector<std::pair<long, std::vector<std::string>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    rows.emplace_back(line_no, std::move(fields));
  }

  bool has_time = schema.timestamp == TimestampColumn::Present;
  if (schema.timestamp == TimestampColumn::Auto) {
    double probe = 0.0;
    has_time = looks_like_time_header(header.front()) ||
               (!rows.empty() && parse_cell(rows.front().second.front(), probe) == Cell::Invalid);
  }
  const std::size_t first = has_time ? 1 : 0;
  if (header.size() <= first) throw DataError("csv has no channel columns");
  ds.channel_names.assign(header.begin() + static_cast<long>(first), header.end());

  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = static_cast<Eigen::Index>(header.size() - first);
  ds.values.resize(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& [ln, fields] = rows[static_cast<std::size_t>(r)];
    if (has_time) ds.timestamps.push_back(fields.front());
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      const auto& cell = fields[first + static_cast<std::size_t>(c)];
      double v = 0.0;
      switch (parse_cell(cell, v)) {
        case Cell::Number:
          ds.values(r, c) = v;
          break;
        case Cell::Invalid:
          throw DataError("line " + std::to_string(ln) + ", column '" + ds.channel_names[static_cast<std::size_t>(c)] +
                          "': non-numeric cell '" + cell + "'");
        case Cell::Missing:
          if (schema.missing == MissingPolicy::Strict || r == 0)
            throw DataError("line " + std::to_string(ln) + ", column '" + ds.channel_names[static_cast<std::size_t>(c)] +
                            "': missing value");
          ds.values(r, c) = ds.values(r - 1, c);
          break;
      }
    }
  }
  return ds;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  auto stem = path.substr(path.find_last_of('/') + 1);
  stem = stem.substr(0, stem.find_last_of('.'));
  return parse_csv(in, schema, stem);
}

void write_csv(std::ostream& os, const MatrixXd& values, const std::vector<std::string>& header,
               const std::vector<std::string>& index, const std::string& index_name) {
  check_shape(static_cast<Eigen::Index>(header.size()) == values.cols(), "csv header vs columns");
  check_shape(index.empty() || static_cast<Eigen::Index>(index.size()) == values.rows(), "csv index vs rows");
  if (!index.empty()) os << index_name << ',';
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    if (!index.empty()) os << index[static_cast<std::size_t>(r)] << ',';
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values(r, c));
      if (c) os << ',';
      os.write(buf, ptr - buf);
    }
    os << '\n';
  }
}

SplitRatios SplitRatios::parse(const std::string& text) {
  SplitRatios r;
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ':')) {
    if (i >= 3) throw UsageError("split ratios need exactly three parts: '" + text + "'");
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v < 1)
      throw UsageError("bad split ratio part '" + part + "'");
    r.parts[i++] = v;
  }
  if (i != 3) throw UsageError("split ratios need exactly three parts: '" + text + "'");
  return r;
}

std::string SplitRatios::str() const {
  return std::to_string(parts[0]) + ":" + std::to_string(parts[1]) + ":" + std::to_string(parts[2]);
}

SplitRatios default_ratios(const std::string& dataset_name) {
  if (dataset_name.rfind("ETT", 0) == 0) return SplitRatios{{3, 1, 2}};
  return SplitRatios{{7, 1, 2}};
}

Splits split(const Dataset& ds, const SplitRatios& ratios, Eigen::Index min_length) {
  const auto n = ds.samples();
  const long total = ratios.parts[0] + ratios.parts[1] + ratios.parts[2];
  const auto n_train = static_cast<Eigen::Index>(n * ratios.parts[0] / total);
  const auto n_val = static_cast<Eigen::Index>(n * ratios.parts[1] / total);
  const auto n_test = n - n_train - n_val;
  const std::array<std::pair<const char*, Eigen::Index>, 3> sizes{
      {{"train", n_train}, {"val", n_val}, {"test", n_test}}};
  for (const auto& [label, len] : sizes)
    if (len < min_length)
      throw DataError(std::string(label) + " segment has " + std::to_string(len) + " rows, needs at least " +
                      std::to_string(min_length));
  Splits s;
  s.train = {ds.values.topRows(n_train), 0};
  s.val = {ds.values.middleRows(n_train, n_val), n_train};
  s.test = {ds.values.bottomRows(n_test), n_train + n_val};
  return s;
}

NormStats fit_normalizer(const MatrixXd& train) {
  if (train.rows() == 0) throw DataError("cannot fit normalizer on an empty segment");
  NormStats s;
  const auto n = train.cols();
  s.mean.resize(n);
  s.stddev.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto col = train.col(c);
    if ((col.array() == col(0)).all()) {
      s.mean(c) = col(0);
      s.stddev(c) = 1.0;
      s.constant_channels.push_back(static_cast<int>(c));
      continue;
    }
    s.mean(c) = col.mean();
    const double var = (col.array() - s.mean(c)).square().mean();
    s.stddev(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

MatrixXd normalize(const NormStats& stats, const MatrixXd& block) {
  check_shape(block.cols() == stats.mean.size(), "normalize block channels");
  return ((block.rowwise() - stats.mean.transpose()).array().rowwise() / stats.stddev.transpose().array()).matrix();
}

MatrixXd denormalize(const NormStats& stats, const MatrixXd& block) {
  check_shape(block.cols() == stats.mean.size(), "denormalize block channels");
  return ((block.array().rowwise() * stats.stddev.transpose().array()).matrix().rowwise() + stats.mean.transpose());
}

Eigen::Index window_count(Eigen::Index length, int lookback, int horizon, int stride) {
  if (stride < 1) throw UsageError("window stride must be >= 1");
  if (length < lookback + horizon)
    throw DataError("segment of " + std::to_string(length) + " rows is shorter than lookback + horizon = " +
                    std::to_string(lookback + horizon));
  return (length - lookback - horizon) / stride + 1;
}

std::vector<SeriesWindow> windows(const MatrixXd& segment, int lookback, int horizon, int stride) {
  const auto count = window_count(segment.rows(), lookback, horizon, stride);
  std::vector<SeriesWindow> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index w = 0; w < count; ++w) {
    const Eigen::Index origin = w * stride;
    out.push_back({segment.middleRows(origin, lookback), segment.middleRows(origin + lookback, horizon), origin});
  }
  return out;
}

std::vector<Motif> default_motifs(int length, double amplitude) {
  if (length < 2) throw UsageError("motif length must be >= 2");
  std::vector<Motif> out(4);
  const double n = length - 1;
  for (int i = 0; i < length; ++i) {
    const double u = i / n;
    out[0].shape.push_back(amplitude * std::max(0.0, 1.0 - std::abs(2.0 * u - 1.0) * 2.0));      // spike
    out[1].shape.push_back(amplitude * (u < 0.8 ? u / 0.8 : (1.0 - u) / 0.2));                    // ramp
    out[2].shape.push_back(-amplitude * std::exp(-std::pow((u - 0.5) / 0.2, 2.0)));               // dip
    out[3].shape.push_back(amplitude * std::sin(6.0 * std::numbers::pi * u) * std::sin(std::numbers::pi * u));  // burst
  }
  return out;
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.length < 1 || spec.channels < 1) throw UsageError("synthetic spec needs positive length and channels");
  Rng rng(seed);
  Dataset ds;
  ds.name = "synthetic";
  for (int j = 0; j < spec.channels; ++j) ds.channel_names.push_back("ch" + std::to_string(j));
  ds.values = MatrixXd::Zero(spec.length, spec.channels);
  const double step = spec.phase_step < 0.0 ? 2.0 * std::numbers::pi / spec.channels : spec.phase_step;
  for (const auto& s : spec.sinusoids) {
    if (!(s.period > 0.0)) throw UsageError("sinusoid period must be positive");
    for (int j = 0; j < spec.channels; ++j)
      for (long t = 0; t < spec.length; ++t)
        ds.values(t, j) += s.amplitude * std::sin(2.0 * std::numbers::pi * t / s.period + j * step);
  }
  auto plant = [&](const Planting& p) {
    if (p.motif < 0 || p.motif >= static_cast<int>(spec.motifs.size()))
      throw UsageError("planting references unknown motif " + std::to_string(p.motif));
    if (p.channel < 0 || p.channel >= spec.channels) throw UsageError("planting channel out of range");
    const auto& shape = spec.motifs[static_cast<std::size_t>(p.motif)].shape;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      const long t = p.start + static_cast<long>(i);
      if (t >= 0 && t < spec.length) ds.values(t, p.channel) += shape[i];
    }
  };
  for (const auto& p : spec.plantings) plant(p);
  std::uniform_int_distribution<int> channel(0, spec.channels - 1);
  for (int m = 0; m < static_cast<int>(spec.motifs.size()); ++m) {
    const auto len = static_cast<long>(spec.motifs[static_cast<std::size_t>(m)].shape.size());
    if (spec.plantings_per_motif > 0 && len > spec.length) throw UsageError("motif longer than the series");
    std::uniform_int_distribution<long> start(0, spec.length - len);
    for (int r = 0; r < spec.plantings_per_motif; ++r) {
      const int ch = channel(rng);
      plant({m, ch, start(rng)});
    }
  }
  if (spec.noise_std > 0.0) ds.values += spec.noise_std * standard_normal<double>(spec.length, spec.channels, rng);
  return ds;
}

}  // namespace bimdiff
