#pragma once

#include "bimdiff/types.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace bimdiff {

/// Multivariate series: rows are time steps, columns are channels.
struct Dataset {
  std::string name;
  std::vector<std::string> channel_names;
  std::vector<std::string> timestamps;  // empty when the file has no timestamp column
  MatrixXd values;

  Eigen::Index samples() const { return values.rows(); }
  Eigen::Index channels() const { return values.cols(); }
};

enum class TimestampColumn { Auto, Present, Absent };
enum class MissingPolicy { Strict, ForwardFill };

struct CsvSchema {
  TimestampColumn timestamp = TimestampColumn::Auto;
  MissingPolicy missing = MissingPolicy::Strict;
};

/// Parses comma-separated text with a header row. Malformed rows raise DataError naming the line.
Dataset parse_csv(std::istream& in, const CsvSchema& schema = {}, const std::string& name = "");
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});

void write_csv(std::ostream& os, const MatrixXd& values, const std::vector<std::string>& header,
               const std::vector<std::string>& index = {}, const std::string& index_name = "");

struct SplitRatios {
  std::array<int, 3> parts{7, 1, 2};
  static SplitRatios parse(const std::string& text);  // "7:1:2"
  std::string str() const;
};

/// Train 3:1:2 for the ETT family, 7:1:2 otherwise.
SplitRatios default_ratios(const std::string& dataset_name);

struct Segment {
  MatrixXd values;
  Eigen::Index offset = 0;  // first row in the source dataset
};

struct Splits {
  Segment train, val, test;
};

/// Contiguous chronological split. Every segment must hold at least one window (min_length rows).
Splits split(const Dataset& ds, const SplitRatios& ratios, Eigen::Index min_length);

struct NormStats {
  VectorXd mean;
  VectorXd stddev;
  std::vector<int> constant_channels;  // channels whose std was 0 and fell back to 1
};

NormStats fit_normalizer(const MatrixXd& train);
MatrixXd normalize(const NormStats& stats, const MatrixXd& block);
MatrixXd denormalize(const NormStats& stats, const MatrixXd& block);

struct SeriesWindow {
  MatrixXd lookback;  // L x N
  MatrixXd horizon;   // H x N
  Eigen::Index origin = 0;  // row of the first lookback step within its segment
};

Eigen::Index window_count(Eigen::Index length, int lookback, int horizon, int stride);
std::vector<SeriesWindow> windows(const MatrixXd& segment, int lookback, int horizon, int stride);

struct Sinusoid {
  double period = 24.0;
  double amplitude = 1.0;
};

struct Motif {
  std::vector<double> shape;
};

struct Planting {
  int motif = 0;
  int channel = 0;
  long start = 0;
};

/// Synthetic cross-channel recurrence: shared sinusoids phase-shifted per channel, plus motifs
/// planted in different channels at different times.
struct SynthSpec {
  long length = 20000;
  int channels = 4;
  std::vector<Sinusoid> sinusoids{{24.0, 1.0}};
  double phase_step = 0.0;  // phase offset added per channel index (radians); < 0 means 2*pi/channels
  double noise_std = 0.0;
  std::vector<Motif> motifs;
  int plantings_per_motif = 0;  // random plantings per motif, in addition to `plantings`
  std::vector<Planting> plantings;
};

/// Default motif library: spike, ramp, dip and oscillating burst shapes of the given length.
std::vector<Motif> default_motifs(int length, double amplitude);

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace bimdiff
