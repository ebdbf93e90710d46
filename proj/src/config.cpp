#include "bimdiff/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace bimdiff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Accepts TOML-style "strings" and [lists] alongside bare values.
std::string unquote(const std::string& v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '[' && v.back() == ']')))
    return trim(v.substr(1, v.size() - 2));
  return v;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw UsageError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  return out;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

struct Binding {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
Binding make_binding(const std::string& key, T& field) {
  if constexpr (std::is_same_v<T, bool>) {
    return {key, [&field] { return std::string(field ? "true" : "false"); },
            [&field, key](const std::string& v) { field = parse_bool(key, v); }};
  } else if constexpr (std::is_same_v<T, std::string>) {
    return {key, [&field] { return '"' + field + '"'; }, [&field](const std::string& v) { field = v; }};
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    return {key, [&field] { return "[" + fmt_list(field) + "]"; }, [&field, key](const std::string& v) { field = parse_list(key, v); }};
  } else if constexpr (std::is_floating_point_v<T>) {
    return {key, [&field] { return fmt(field); }, [&field, key](const std::string& v) { field = parse_number<T>(key, v); }};
  } else {
    return {key, [&field] { return std::to_string(field); },
            [&field, key](const std::string& v) { field = parse_number<T>(key, v); }};
  }
}

std::vector<Binding> bindings(Config& c) {
  auto& m = c.model;
  auto& t = c.train;
  std::vector<Binding> b{
      make_binding("data.source", c.data.source),
      make_binding("data.path", c.data.path),
      make_binding("data.ratios", c.data.ratios),
      make_binding("data.missing", c.data.missing),
      make_binding("data.timestamp", c.data.timestamp),
      make_binding("data.train_stride", c.data.train_stride),
      make_binding("data.eval_stride", c.data.eval_stride),
      make_binding("synth.length", c.synth.length),
      make_binding("synth.channels", c.synth.channels),
      make_binding("synth.periods", c.synth.periods),
      make_binding("synth.amplitudes", c.synth.amplitudes),
      make_binding("synth.phase_step", c.synth.phase_step),
      make_binding("synth.noise_std", c.synth.noise_std),
      make_binding("synth.motif_length", c.synth.motif_length),
      make_binding("synth.motif_amplitude", c.synth.motif_amplitude),
      make_binding("synth.motif_count", c.synth.motif_count),
      make_binding("synth.plantings_per_motif", c.synth.plantings_per_motif),
      make_binding("model.lookback", m.lookback),
      make_binding("model.horizon", m.horizon),
      make_binding("model.latent_dim", m.latent_dim),
      make_binding("model.encoder_hidden", m.encoder_hidden),
      make_binding("model.denoiser_hidden", m.denoiser_hidden),
      make_binding("model.denoiser_layers", m.denoiser_layers),
      make_binding("model.embed_dim", m.embed_dim),
      make_binding("model.semantic_blocks", m.semantic_blocks),
      make_binding("model.episodic_capacity", m.episodic_capacity),
      make_binding("model.queue_capacity", m.queue_capacity),
      make_binding("model.recall_top_k", m.recall_top_k),
      make_binding("model.log_var_init", m.log_var_init),
      make_binding("model.use_semantic", m.use_semantic),
      make_binding("model.use_episodic", m.use_episodic),
      make_binding("model.shared_memory", m.shared_memory),
      make_binding("schedule.steps", m.diffusion_steps),
      Binding{"schedule.kind", [&m] { return '"' + to_string(m.schedule.kind) + '"'; },
       [&m](const std::string& v) { m.schedule.kind = parse_schedule_kind(v); }},
      make_binding("schedule.beta_min", m.schedule.beta_min),
      make_binding("schedule.beta_max", m.schedule.beta_max),
      make_binding("schedule.alpha_bar_end", m.schedule.alpha_bar_end),
      make_binding("train.lr", t.adam.lr),
      make_binding("train.beta1", t.adam.beta1),
      make_binding("train.beta2", t.adam.beta2),
      make_binding("train.eps", t.adam.eps),
      make_binding("train.batch_size", t.batch_size),
      make_binding("train.epochs", t.epochs),
      make_binding("train.max_steps", t.max_steps),
      make_binding("train.alpha1", t.loss.alpha1),
      make_binding("train.alpha2", t.loss.alpha2),
      make_binding("train.margin", t.loss.margin),
      make_binding("train.clip_norm", t.clip_norm),
      make_binding("run.seed", c.run.seed),
      make_binding("run.threads", c.run.threads),
      make_binding("run.precision", c.run.precision),
      make_binding("run.substeps", c.run.substeps),
      make_binding("run.sampler", c.run.sampler),
      make_binding("run.checkpoint_every", c.run.checkpoint_every),
      make_binding("run.log_every", c.run.log_every),
      make_binding("run.checkpoint", c.run.checkpoint),
      make_binding("run.export_window", c.run.export_window),
  };
  return b;
}

}  // namespace

SynthSpec SynthSection::spec() const {
  if (periods.size() != amplitudes.size()) throw UsageError("synth.periods and synth.amplitudes differ in length");
  SynthSpec s;
  s.length = length;
  s.channels = channels;
  s.sinusoids.clear();
  for (std::size_t i = 0; i < periods.size(); ++i) s.sinusoids.push_back({periods[i], amplitudes[i]});
  s.phase_step = phase_step;
  s.noise_std = noise_std;
  if (motif_count > 0) {
    auto lib = default_motifs(motif_length, motif_amplitude);
    if (motif_count > static_cast<int>(lib.size()))
      throw UsageError("synth.motif_count exceeds the motif library size " + std::to_string(lib.size()));
    lib.resize(static_cast<std::size_t>(motif_count));
    s.motifs = std::move(lib);
  }
  s.plantings_per_motif = plantings_per_motif;
  return s;
}

void Config::set(const std::string& dotted_key, const std::string& value) {
  for (auto& b : bindings(*this)) {
    if (b.key == dotted_key) {
      b.set(value);
      return;
    }
  }
  throw UsageError("unknown config key '" + dotted_key + "'");
}

Config Config::parse(const std::string& text) {
  Config c;
  std::stringstream ss(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto full = section.empty() ? key : section + "." + key;
    c.set(full, unquote(trim(line.substr(eq + 1))));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::to_text() const {
  auto self = *this;
  std::string out, section;
  for (const auto& b : bindings(self)) {
    const auto dot = b.key.find('.');
    const auto sec = b.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += b.key.substr(dot + 1) + " = " + b.get() + "\n";
  }
  return out;
}

std::vector<std::string> Config::keys() const {
  auto self = *this;
  std::vector<std::string> out;
  for (const auto& b : bindings(self)) out.push_back(b.key);
  return out;
}

Sampler Config::sampler() const {
  if (run.sampler == "ddim") return Sampler::Ddim;
  if (run.sampler == "ancestral") return Sampler::Ancestral;
  throw UsageError("unknown sampler '" + run.sampler + "'");
}

EvalOptions Config::eval_options() const { return {run.substeps, sampler(), run.seed}; }

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bimdiff
