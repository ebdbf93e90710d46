#pragma once

#include "bimdiff/data.hpp"
#include "bimdiff/model.hpp"
#include "bimdiff/trainer.hpp"

#include <string>
#include <vector>

namespace bimdiff {

struct DataSection {
  std::string source = "csv";  // csv | synth
  std::string path;
  std::string ratios = "auto";
  std::string missing = "strict";
  std::string timestamp = "auto";
  int train_stride = 1;
  int eval_stride = 0;  // 0: horizon (non-overlapping forecasts)
};

struct SynthSection {
  long length = 20000;
  int channels = 4;
  std::vector<double> periods{24.0, 168.0};
  std::vector<double> amplitudes{1.0, 0.5};
  double phase_step = -1.0;
  double noise_std = 0.1;
  int motif_length = 24;
  double motif_amplitude = 3.0;
  int motif_count = 4;
  int plantings_per_motif = 60;

  SynthSpec spec() const;
};

struct RunSection {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string precision = "double";  // double | float
  int substeps = 1;
  std::string sampler = "ddim";      // ddim | ancestral
  int checkpoint_every = 1;          // epochs
  int log_every = 1;                 // steps
  std::string checkpoint;            // defaults to <out>/checkpoint.bin
  int export_window = 0;             // test window used by export-scores
};

/// Everything a run needs. Text form: `[section]` headers and `key = value` lines; `#` starts a comment.
struct Config {
  DataSection data;
  SynthSection synth;
  ModelConfig model;
  TrainOptions train;
  RunSection run;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  /// Applies one `section.key=value` override.
  void set(const std::string& dotted_key, const std::string& value);

  /// Resolved snapshot with every key materialized.
  std::string to_text() const;

  std::vector<std::string> keys() const;
  Sampler sampler() const;
  EvalOptions eval_options() const;
};

std::uint64_t fnv1a(const std::string& text);

}  // namespace bimdiff
