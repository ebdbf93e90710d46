#pragma once

#include "bimdiff/config.hpp"

#include <string>
#include <vector>

namespace bimdiff {

/// A dataset split, normalized with training statistics and cut into windows.
struct PreparedData {
  Dataset dataset;
  SplitRatios ratios;
  Splits splits;  // raw scale
  NormStats stats;
  std::vector<SeriesWindow> train, val, test;  // normalized
};

/// Loads (or generates) the configured dataset.
Dataset load_dataset(const Config& cfg);

/// Splits, normalizes and windows `ds`. Sets cfg.model.channels to the dataset's channel count.
PreparedData prepare_data(Config& cfg, Dataset ds);

inline PreparedData prepare_data(Config& cfg) { return prepare_data(cfg, load_dataset(cfg)); }

/// Model-switch overrides for the named ablation variants: full, w/o-semantic, w/o-episodic,
/// w/o-both, w/o-shared.
Config apply_variant(Config cfg, const std::string& variant);
const std::vector<std::string>& variant_names();

}  // namespace bimdiff
