#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "sage/error.hpp"
#include "sage/text.hpp"

namespace sage::cli {

namespace {

enum class Kind { integer, real, text, boolean };

struct KeySpec {
  const char* name;
  Stage stage;
  Kind kind;
  const char* fallback;
};

// clang-format off
const KeySpec kKeys[] = {
    // dataset
    {"seed", Stage::data, Kind::integer, "1"},
    {"n_meta", Stage::data, Kind::integer, "200"},
    {"children", Stage::data, Kind::integer, "3"},
    {"embed_dim", Stage::data, Kind::integer, "16"},
    {"data_dim", Stage::data, Kind::integer, "2"},
    {"tau_min", Stage::data, Kind::real, "0.6"},
    {"tau_max", Stage::data, Kind::real, "0.9"},
    {"spread", Stage::data, Kind::real, "0.15"},
    {"radius", Stage::data, Kind::real, "5"},
    {"location_weight", Stage::data, Kind::real, "0.65"},
    {"location_freq", Stage::data, Kind::real, "0.5"},
    {"noise_dims", Stage::data, Kind::integer, "4"},
    {"perturb_dims", Stage::data, Kind::integer, "4"},
    {"offset_scale", Stage::data, Kind::real, "2"},
    {"min_angle", Stage::data, Kind::real, "0.05"},
    {"max_retries", Stage::data, Kind::integer, "20"},
    {"per_concept", Stage::data, Kind::integer, "3"},
    {"target_groups", Stage::data, Kind::integer, "5000"},
    {"clique_cap", Stage::data, Kind::integer, "100000000"},
    {"size_weights", Stage::data, Kind::text, ""},
    // model and training
    {"t_train", Stage::train, Kind::integer, "1000"},
    {"schedule", Stage::train, Kind::text, "linear"},
    {"hidden", Stage::train, Kind::text, "64,64"},
    {"activation", Stage::train, Kind::text, "silu"},
    {"loss", Stage::train, Kind::text, "sage"},
    {"model_label", Stage::train, Kind::text, ""},
    {"lambda1", Stage::train, Kind::real, "1"},
    {"lambda2", Stage::train, Kind::real, "1"},
    {"beta_train", Stage::train, Kind::real, "0.3"},
    {"cfg_dropout", Stage::train, Kind::real, "0.1"},
    {"soft_target_grad", Stage::train, Kind::boolean, "false"},
    {"steps", Stage::train, Kind::integer, "20000"},
    {"batch", Stage::train, Kind::integer, "4"},
    {"lr", Stage::train, Kind::real, "0.001"},
    {"weight_decay", Stage::train, Kind::real, "0"},
    {"checkpoint_every", Stage::train, Kind::integer, "0"},
    // sampling
    {"beta", Stage::sample, Kind::real, "0.3"},
    {"n_steps", Stage::sample, Kind::integer, "30"},
    {"threshold", Stage::sample, Kind::real, "0.6"},
    {"omega", Stage::sample, Kind::real, "1"},
    {"scheme", Stage::sample, Kind::text, "shared"},
    {"repeats", Stage::sample, Kind::integer, "1"},
    // not hashed
    {"out_dir", Stage::output, Kind::text, "run"},
};
// clang-format on

const KeySpec& spec_of(const std::string& key) {
  for (const auto& k : kKeys)
    if (key == k.name) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return v;
}

std::string normalise(const KeySpec& k, const std::string& raw) {
  const std::string v = unquote(raw);
  try {
    switch (k.kind) {
      case Kind::integer: {
        const auto n = parse_int(v);
        if (n < 0) throw ConfigError(std::string(k.name) + " must be non-negative");
        return std::to_string(n);
      }
      case Kind::real: {
        const double d = parse_double(v);
        if (!std::isfinite(d)) throw ConfigError(std::string(k.name) + " must be finite");
        return format_double(d);
      }
      case Kind::boolean:
        if (v == "true" || v == "1") return "true";
        if (v == "false" || v == "0") return "false";
        throw ConfigError(std::string(k.name) + " must be true or false");
      case Kind::text:
        if (v.find('"') != std::string::npos || v.find('\n') != std::string::npos)
          throw ConfigError(std::string(k.name) + ": quotes and newlines are not allowed");
        return v;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(k.name) + ": cannot parse '" + v + "'");
  }
  return v;
}

std::string canonical_of(const std::map<std::string, std::string>& values,
                         bool (*keep)(Stage)) {
  std::ostringstream out;
  for (const auto& [key, value] : values) {
    const auto& k = spec_of(key);
    if (!keep(k.stage)) continue;
    out << key << " = ";
    if (k.kind == Kind::text) out << '"' << value << '"';
    else out << value;
    out << '\n';
  }
  return out.str();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split(s, ','))
    if (!trim(tok).empty()) out.push_back(parse_double(trim(tok)));
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : kKeys) values_[k.name] = normalise(k, k.fallback);
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) { return parse(read_file(path)); }

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  values_[key] = normalise(spec_of(key), value);
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' needs key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

double ExperimentConfig::number(const std::string& key) const { return parse_double(get(key)); }

std::size_t ExperimentConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(parse_int(get(key)));
}

bool ExperimentConfig::flag(const std::string& key) const { return get(key) == "true"; }

std::string ExperimentConfig::canonical() const {
  return canonical_of(values_, [](Stage) { return true; });
}

std::string ExperimentConfig::data_hash() const { return data_fingerprint(dataset_config(*this)); }

std::string ExperimentConfig::train_hash() const {
  return fnv1a_hex(canonical_of(values_, [](Stage s) {
    return s == Stage::data || s == Stage::train;
  }));
}

std::string ExperimentConfig::config_hash() const {
  return fnv1a_hex(canonical_of(values_, [](Stage s) { return s != Stage::output; }));
}

void apply_environment(ExperimentConfig& c) {
  if (const char* seed = std::getenv("SAGE_SEED"); seed && *seed) c.set("seed", seed);
}

Stage stage_of(const std::string& key) { return spec_of(key).stage; }

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& k : kKeys) out.emplace_back(k.name);
  return out;
}

DatasetConfig dataset_config(const ExperimentConfig& c) {
  DatasetConfig d;
  auto& w = d.world;
  w.seed = static_cast<std::uint64_t>(parse_int(c.get("seed")));
  w.n_meta = c.count("n_meta");
  w.children = c.count("children");
  w.embed_dim = c.count("embed_dim");
  w.data_dim = c.count("data_dim");
  w.tau_min = c.number("tau_min");
  w.tau_max = c.number("tau_max");
  w.spread = c.number("spread");
  w.radius = c.number("radius");
  w.location_weight = c.number("location_weight");
  w.location_freq = c.number("location_freq");
  w.noise_dims = c.count("noise_dims");
  w.perturb_dims = c.count("perturb_dims");
  w.offset_scale = c.number("offset_scale");
  w.min_angle = c.number("min_angle");
  w.max_retries = c.count("max_retries");
  d.per_concept = c.count("per_concept");
  d.target_groups = c.count("target_groups");
  d.grouping.clique_cap = c.count("clique_cap");
  d.grouping.size_weights = parse_list(c.get("size_weights"));
  return d;
}

DenoiserShape denoiser_shape(const ExperimentConfig& c) {
  DenoiserShape s;
  s.data_dim = c.count("data_dim");
  s.embed_dim = c.count("embed_dim");
  s.hidden.clear();
  for (double w : parse_list(c.get("hidden"))) {
    if (w < 1.0 || w != std::floor(w)) throw ConfigError("hidden: widths must be positive integers");
    s.hidden.push_back(static_cast<std::size_t>(w));
  }
  s.activation = parse_activation(c.get("activation"));
  return s;
}

std::shared_ptr<const NoiseSchedule> noise_schedule(const ExperimentConfig& c) {
  return std::make_shared<const NoiseSchedule>(
      build_schedule(static_cast<int>(c.count("t_train")), c.get("schedule")));
}

TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.mode = parse_loss_mode(c.get("loss"));
  t.loss.lambda1 = c.number("lambda1");
  t.loss.lambda2 = c.number("lambda2");
  const double beta = c.number("beta_train");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta_train must be in [0, 1]");
  const int t_train = static_cast<int>(c.count("t_train"));
  t.loss.t_star_train = branch_timestep(beta, t_train);
  t.loss.cfg_dropout = c.number("cfg_dropout");
  t.loss.soft_target_grad = c.flag("soft_target_grad");
  t.steps = c.count("steps");
  t.batch = c.count("batch");
  t.adam.lr = c.number("lr");
  t.adam.weight_decay = c.number("weight_decay");
  t.checkpoint_every = c.count("checkpoint_every");
  if (t.adam.lr <= 0.0) throw ConfigError("lr must be positive");
  return t;
}

SamplingGrid sampling_grid(const ExperimentConfig& c, const NoiseSchedule& s) {
  const double beta = c.number("beta");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must be in [0, 1]");
  return build_grid(s, static_cast<int>(c.count("n_steps")), beta);
}

std::string model_label(const ExperimentConfig& c) {
  const auto& l = c.get("model_label");
  return l.empty() ? c.get("loss") : l;
}

}  // namespace sage::cli
