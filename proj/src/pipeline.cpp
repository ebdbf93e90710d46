#include "bimdiff/pipeline.hpp"

namespace bimdiff {

Dataset load_dataset(const Config& cfg) {
  if (cfg.data.source == "synth") return synth_generate(cfg.synth.spec(), derive_seed(cfg.run.seed, 200));
  if (cfg.data.source != "csv") throw UsageError("data.source must be 'csv' or 'synth', got '" + cfg.data.source + "'");
  if (cfg.data.path.empty()) throw UsageError("data.path is required when data.source = csv");
  CsvSchema schema;
  if (cfg.data.missing == "ffill")
    schema.missing = MissingPolicy::ForwardFill;
  else if (cfg.data.missing != "strict")
    throw UsageError("data.missing must be 'strict' or 'ffill'");
  if (cfg.data.timestamp == "present")
    schema.timestamp = TimestampColumn::Present;
  else if (cfg.data.timestamp == "absent")
    schema.timestamp = TimestampColumn::Absent;
  else if (cfg.data.timestamp != "auto")
    throw UsageError("data.timestamp must be 'auto', 'present' or 'absent'");
  return load_csv(cfg.data.path, schema);
}

PreparedData prepare_data(Config& cfg, Dataset ds) {
  PreparedData p;
  cfg.model.channels = static_cast<int>(ds.channels());
  p.ratios = cfg.data.ratios == "auto" ? default_ratios(ds.name) : SplitRatios::parse(cfg.data.ratios);
  const int L = cfg.model.lookback, H = cfg.model.horizon;
  p.splits = split(ds, p.ratios, L + H);
  p.stats = fit_normalizer(p.splits.train.values);
  const int eval_stride = cfg.data.eval_stride > 0 ? cfg.data.eval_stride : H;
  p.train = windows(normalize(p.stats, p.splits.train.values), L, H, cfg.data.train_stride);
  p.val = windows(normalize(p.stats, p.splits.val.values), L, H, eval_stride);
  p.test = windows(normalize(p.stats, p.splits.test.values), L, H, eval_stride);
  p.dataset = std::move(ds);
  return p;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"full", "w/o-semantic", "w/o-episodic", "w/o-both", "w/o-shared"};
  return names;
}

Config apply_variant(Config cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "w/o-semantic") {
    cfg.model.use_semantic = false;
  } else if (variant == "w/o-episodic") {
    cfg.model.use_episodic = false;
  } else if (variant == "w/o-both") {
    cfg.model.use_semantic = false;
    cfg.model.use_episodic = false;
  } else if (variant == "w/o-shared") {
    cfg.model.shared_memory = false;
  } else {
    throw UsageError("unknown variant '" + variant + "'");
  }
  return cfg;
}

}  // namespace bimdiff
