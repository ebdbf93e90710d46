#include "bimdiff/checkpoint.hpp"
#include "bimdiff/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace bimdiff;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> substeps;
  std::string out = ".";
  std::string variants;
};

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text; }

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json metrics_json(const EvalResult& r) {
  return {{"mae", r.mae}, {"mse", r.mse}, {"mae_normalized", r.mae_norm}, {"mse_normalized", r.mse_norm},
          {"windows", r.windows}};
}

json stats_json(const PreparedData& p) {
  json j;
  j["name"] = p.dataset.name;
  j["samples"] = p.dataset.samples();
  j["channels"] = p.dataset.channels();
  j["channel_names"] = p.dataset.channel_names;
  j["ratios"] = p.ratios.str();
  j["splits"] = {{"train", p.splits.train.values.rows()},
                 {"val", p.splits.val.values.rows()},
                 {"test", p.splits.test.values.rows()}};
  j["windows"] = {{"train", p.train.size()}, {"val", p.val.size()}, {"test", p.test.size()}};
  j["mean"] = std::vector<double>(p.stats.mean.data(), p.stats.mean.data() + p.stats.mean.size());
  j["stddev"] = std::vector<double>(p.stats.stddev.data(), p.stats.stddev.data() + p.stats.stddev.size());
  j["constant_channels"] = p.stats.constant_channels;
  return j;
}

Config resolve_config(const Options& o) {
  Config cfg = o.config_path.empty() ? Config{} : Config::load(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.run.seed = *o.seed;
  if (o.threads) cfg.run.threads = *o.threads;
  if (o.substeps) cfg.run.substeps = *o.substeps;
  if (cfg.run.threads < 1) throw UsageError("threads must be >= 1");
  if (cfg.run.precision != "double" && cfg.run.precision != "float")
    throw UsageError("run.precision must be 'double' or 'float'");
  cfg.train.threads = cfg.run.threads;
  return cfg;
}

fs::path checkpoint_path(const Config& cfg, const fs::path& out) {
  return cfg.run.checkpoint.empty() ? out / "checkpoint.bin" : fs::path(cfg.run.checkpoint);
}

template <typename Scalar>
void save_model(const fs::path& path, BimDiffModel<Scalar>& model, const Config& cfg, const NormStats& stats) {
  auto os = open_out(path, std::ios::binary);
  save_checkpoint(os, model, cfg.to_text(), &stats);
}

/// A model restored from disk, along with the configuration it was trained under. Options given
/// on the command line replace the stored run settings but never the model shape.
template <typename Scalar>
struct Loaded {
  Config cfg;
  NormStats stats;
  BimDiffModel<Scalar> model;
};

template <typename Scalar>
Loaded<Scalar> load_model(const fs::path& path, const Config& cli) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read checkpoint " + path.string());
  const auto header = read_checkpoint_header(is);
  Loaded<Scalar> l;
  l.cfg = Config::parse(header.config_text);
  l.cfg.run = cli.run;
  l.cfg.data = cli.data;
  l.cfg.synth = cli.synth;
  l.stats = header.stats;
  l.cfg.model.channels = static_cast<int>(l.stats.mean.size());
  if (l.cfg.model.channels < 1) throw DataError("checkpoint has no normalization statistics");
  l.model = BimDiffModel<Scalar>(l.cfg.model, l.cfg.run.seed);
  load_checkpoint_body(is, header, l.model);
  return l;
}

template <typename Scalar>
TrainState<Scalar> fit(Config& cfg, const PreparedData& data, const fs::path& out, const fs::path& ckpt) {
  TrainState<Scalar> state(cfg.model, cfg.run.seed);
  auto log = open_out(out / "training.log");
  log << "step,epoch,condition,consistency,contrastive,total,grad_norm,lr\n";
  log << std::setprecision(10);
  const int every = std::max(1, cfg.run.log_every);
  const int ckpt_every = std::max(1, cfg.run.checkpoint_every);
  train<Scalar>(
      state, data.train, cfg.train,
      [&](const StepReport& r, int epoch) {
        if (r.step % every) return;
        log << r.step << ',' << epoch << ',' << r.condition << ',' << r.consistency << ',' << r.contrastive << ','
            << r.total << ',' << r.grad_norm << ',' << cfg.train.adam.lr << '\n';
      },
      [&](int epoch) {
        if (epoch % ckpt_every == 0) save_model(ckpt, state.model, cfg, data.stats);
      });
  save_model(ckpt, state.model, cfg, data.stats);
  return state;
}

void write_common(const Config& cfg, const fs::path& out) {
  write_text(out / "resolved_config.toml", cfg.to_text());
  std::ofstream os = open_out(out / "schedule.csv");
  make_schedule(cfg.model.diffusion_steps, cfg.model.schedule).write_csv(os);
}

template <typename Scalar>
void cmd_train(Config cfg, const fs::path& out) {
  const auto data = prepare_data(cfg);
  write_common(cfg, out);
  write_json(out / "dataset_stats.json", stats_json(data));
  const auto state = fit<Scalar>(cfg, data, out, checkpoint_path(cfg, out));
  json m;
  m["split"] = "val";
  m["steps"] = state.step;
  m["metrics"] = metrics_json(evaluate(state.model, data.val, data.stats, cfg.eval_options()));
  write_json(out / "metrics.json", m);
}

template <typename Scalar>
void cmd_evaluate(const Config& cli, const fs::path& out) {
  auto l = load_model<Scalar>(checkpoint_path(cli, out), cli);
  auto data = prepare_data(l.cfg);
  data.stats = l.stats;  // scoring uses the statistics the model was trained with
  data.test = windows(normalize(l.stats, data.splits.test.values), l.cfg.model.lookback, l.cfg.model.horizon,
                      l.cfg.data.eval_stride > 0 ? l.cfg.data.eval_stride : l.cfg.model.horizon);
  write_common(l.cfg, out);
  json m;
  m["split"] = "test";
  m["metrics"] = metrics_json(evaluate(l.model, data.test, data.stats, l.cfg.eval_options()));
  write_json(out / "metrics.json", m);
}

template <typename Scalar>
void cmd_forecast(const Config& cli, const fs::path& out) {
  auto l = load_model<Scalar>(checkpoint_path(cli, out), cli);
  const auto ds = load_dataset(l.cfg);
  const int L = l.cfg.model.lookback, H = l.cfg.model.horizon;
  if (ds.samples() < L) throw DataError("forecast needs at least " + std::to_string(L) + " rows");
  if (ds.channels() != l.cfg.model.channels)
    throw DataError("input has " + std::to_string(ds.channels()) + " channels, checkpoint expects " +
                    std::to_string(l.cfg.model.channels));
  const MatrixXd lookback = normalize(l.stats, ds.values.bottomRows(L));
  Rng rng(forecast_seed(l.cfg.run.seed, 0));
  const MatrixXd pred =
      l.model.forecast(to_scalar<Scalar>(lookback), l.cfg.run.substeps, rng, l.cfg.sampler()).template cast<double>();
  std::vector<std::string> index;
  for (int h = 1; h <= H; ++h) index.push_back(std::to_string(h));
  write_common(l.cfg, out);
  auto os = open_out(out / "forecasts.csv");
  os << std::setprecision(17);
  write_csv(os, denormalize(l.stats, pred), ds.channel_names, index, "step");
  const std::string text = l.cfg.to_text();
  write_json(out / "forecasts.json", {{"config_hash", hex(fnv1a(text))},
                                      {"seed", l.cfg.run.seed},
                                      {"substeps", l.cfg.run.substeps},
                                      {"sampler", l.cfg.run.sampler},
                                      {"lookback_end_row", ds.samples()}});
}

template <typename Scalar>
void cmd_export_scores(const Config& cli, const fs::path& out) {
  auto l = load_model<Scalar>(checkpoint_path(cli, out), cli);
  auto data = prepare_data(l.cfg);
  const auto test = windows(normalize(l.stats, data.splits.test.values), l.cfg.model.lookback, l.cfg.model.horizon,
                            l.cfg.data.eval_stride > 0 ? l.cfg.data.eval_stride : l.cfg.model.horizon);
  const int w = l.cfg.run.export_window;
  if (w < 0 || w >= static_cast<int>(test.size()))
    throw UsageError("run.export_window " + std::to_string(w) + " is outside [0, " + std::to_string(test.size()) + ")");
  const auto scores = l.model.attention_scores(to_scalar<Scalar>(test[static_cast<std::size_t>(w)].lookback));
  auto dump = [&](const fs::path& path, const MatrixXd& m, const std::string& prefix) {
    std::vector<std::string> header, index;
    for (Eigen::Index c = 0; c < m.cols(); ++c) header.push_back(prefix + std::to_string(c));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      index.push_back(r < static_cast<Eigen::Index>(data.dataset.channel_names.size())
                          ? data.dataset.channel_names[static_cast<std::size_t>(r)]
                          : std::to_string(r));
    auto os = open_out(path);
    os << std::setprecision(17);
    write_csv(os, m, header, index, "channel");
  };
  write_common(l.cfg, out);
  dump(out / "scores_semantic.csv", scores.semantic, "block");
  dump(out / "scores_episodic.csv", scores.episodic, "record");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename Scalar>
void cmd_ablate(Config cfg, const fs::path& out, const std::string& variants) {
  auto names = variants.empty() ? variant_names() : split_list(variants);
  for (const auto& n : names) apply_variant(cfg, n);  // reject unknown names before any training
  const auto data = prepare_data(cfg);
  write_common(cfg, out);
  write_json(out / "dataset_stats.json", stats_json(data));
  json rows = json::array();
  auto csv = open_out(out / "ablation.csv");
  csv << "variant,mae,mse,mae_normalized,mse_normalized,windows\n" << std::setprecision(10);
  for (const auto& name : names) {
    Config v = apply_variant(cfg, name);
    std::string dir = name;
    std::replace(dir.begin(), dir.end(), '/', '_');
    const fs::path sub = out / dir;
    fs::create_directories(sub);
    write_text(sub / "resolved_config.toml", v.to_text());
    v.run.checkpoint.clear();
    const auto state = fit<Scalar>(v, data, sub, sub / "checkpoint.bin");
    const auto r = evaluate(state.model, data.test, data.stats, v.eval_options());
    json row{{"variant", name}};
    row.update(metrics_json(r));
    rows.push_back(row);
    csv << name << ',' << r.mae << ',' << r.mse << ',' << r.mae_norm << ',' << r.mse_norm << ',' << r.windows << std::endl;
  }
  write_json(out / "metrics.json", {{"split", "test"}, {"variants", rows}});
}

void cmd_synth(Config cfg, const fs::path& out) {
  cfg.data.source = "synth";
  const auto ds = load_dataset(cfg);
  write_text(out / "resolved_config.toml", cfg.to_text());
  auto os = open_out(out / "synth.csv");
  os << std::setprecision(17);
  write_csv(os, ds.values, ds.channel_names);
}

template <typename Scalar>
void dispatch(const Options& o, const Config& cfg, const fs::path& out) {
  if (o.command == "train") return cmd_train<Scalar>(cfg, out);
  if (o.command == "evaluate") return cmd_evaluate<Scalar>(cfg, out);
  if (o.command == "forecast") return cmd_forecast<Scalar>(cfg, out);
  if (o.command == "export-scores") return cmd_export_scores<Scalar>(cfg, out);
  if (o.command == "ablate") return cmd_ablate<Scalar>(cfg, out, o.variants);
  if (o.command == "synth") return cmd_synth(cfg, out);
  throw UsageError("unknown command '" + o.command + "'");
}

int fail(const char* kind, int code, const std::string& message) {
  std::cerr << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Memory-augmented diffusion forecaster"};
  app.require_subcommand(1, 1);
  for (const char* name : {"train", "forecast", "evaluate", "ablate", "export-scores", "synth"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", o.config_path, "Config file");
    sub->add_option("--set", o.overrides, "Override section.key=value (repeatable)");
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--threads", o.threads, "Worker threads");
    sub->add_option("--substeps", o.substeps, "Sampling substeps");
    sub->add_option("--out", o.out, "Output directory");
    if (std::string(name) == "ablate") sub->add_option("--variants", o.variants, "Comma-separated variant names");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 1, e.what());
  }
  o.command = app.get_subcommands().front()->get_name();

  try {
    const Config cfg = resolve_config(o);
    const fs::path out(o.out);
    fs::create_directories(out);
    if (cfg.run.precision == "float")
      dispatch<float>(o, cfg, out);
    else
      dispatch<double>(o, cfg, out);
  } catch (const UsageError& e) {
    return fail("usage", 1, e.what());
  } catch (const DataError& e) {
    return fail("data", 2, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", 3, e.what());
  } catch (const InvariantError& e) {
    return fail("invariant", 4, e.what());
  } catch (const std::domain_error& e) {
    return fail("numeric", 3, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("data", 2, e.what());
  } catch (const std::exception& e) {
    return fail("invariant", 4, e.what());
  }
  return 0;
}
