#include "bae/experiment.hpp"

#include "bae/io.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <set>

namespace bae {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!keys.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DataSource parse_data(const json& j) {
  check_keys(j, {"source", "path", "synthetic"}, "data");
  DataSource d;
  const auto source = j.at("source").get<std::string>();
  if (source == "directory") {
    d.kind = DataSource::Kind::directory;
    d.path = j.at("path").get<std::string>();
    if (j.contains("synthetic")) throw ConfigError("data: 'synthetic' block given for a directory source");
  } else if (source == "synthetic") {
    d.kind = DataSource::Kind::synthetic;
    if (j.contains("path")) throw ConfigError("data: 'path' given for a synthetic source");
    if (j.contains("synthetic")) {
      const json& s = j.at("synthetic");
      check_keys(s,
                 {"sensors", "cycles", "seed", "affected_sensors", "offset_shift", "amplitude_shift", "noise_shift",
                  "degraded_cycles", "degraded_coolers"},
                 "data.synthetic");
      read(s, "sensors", d.synthetic.sensors);
      read(s, "cycles", d.synthetic.cycles);
      read(s, "seed", d.synthetic.seed);
      read(s, "affected_sensors", d.synthetic.affected_sensors);
      read(s, "offset_shift", d.synthetic.offset_shift);
      read(s, "amplitude_shift", d.synthetic.amplitude_shift);
      read(s, "noise_shift", d.synthetic.noise_shift);
      read(s, "degraded_cycles", d.degraded_cycles);
      read(s, "degraded_coolers", d.degraded_coolers);
    }
    d.synthetic.validate();
    if (d.degraded_cycles < 1) throw ConfigError("data.synthetic.degraded_cycles must be at least 1");
    for (double c : d.degraded_coolers)
      if (!(c >= 3.0 && c < 100.0)) throw ConfigError("data.synthetic.degraded_coolers must lie in [3, 100)");
  } else {
    throw ConfigError("data.source must be 'directory' or 'synthetic', got '" + source + "'");
  }
  return d;
}

}  // namespace

NetworkSpec ExperimentConfig::network(Index input_dim) const {
  NetworkSpec spec;
  spec.widths.push_back(input_dim);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(input_dim);
  spec.activation = activation;
  spec.leaky_slope = leaky_slope;
  spec.validate();
  return spec;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j, {"seed", "output", "data", "network", "train", "evaluation"}, "config");
    std::uint64_t seed = 0;
    read(j, "seed", seed);
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (!j.contains("data")) throw ConfigError("config: missing 'data' block");
    c.data = parse_data(j.at("data"));

    if (j.contains("network")) {
      const json& n = j.at("network");
      check_keys(n, {"hidden", "activation", "leaky_slope"}, "network");
      read(n, "hidden", c.hidden);
      if (n.contains("activation")) c.activation = parse_activation(n.at("activation").get<std::string>());
      read(n, "leaky_slope", c.leaky_slope);
    }
    if (c.hidden.empty()) throw ConfigError("network.hidden needs at least one layer");

    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t,
                 {"members", "lambda", "epochs", "batch_size", "learning_rate", "anchor_std_scale", "split_ratio"},
                 "train");
      read(t, "members", c.train.members);
      read(t, "lambda", c.train.lambda);
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "anchor_std_scale", c.train.anchor_std_scale);
      read(t, "split_ratio", c.split_ratio);
    }

    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      check_keys(e, {"real_drift", "drifts", "reconstruction", "cluster_k"}, "evaluation");
      read(e, "real_drift", c.real_drift);
      read(e, "cluster_k", c.cluster_k);
      if (e.contains("reconstruction")) {
        const auto mode = e.at("reconstruction").get<std::string>();
        if (mode == "ensemble_mean") c.reconstruction = ReconstructionMode::ensemble_mean;
        else if (mode == "member_mean") c.reconstruction = ReconstructionMode::member_mean;
        else throw ConfigError("evaluation.reconstruction must be 'ensemble_mean' or 'member_mean'");
      }
      if (e.contains("drifts")) {
        for (const auto& d : e.at("drifts")) {
          check_keys(d, {"sensor", "kinds", "levels"}, "evaluation.drifts[]");
          DriftSweep sweep;
          sweep.sensor = d.at("sensor").get<std::string>();
          for (const auto& k : d.at("kinds")) sweep.kinds.push_back(drift::parse_kind(k.get<std::string>()));
          sweep.levels = d.at("levels").get<std::vector<double>>();
          for (double level : sweep.levels)
            drift::DriftSpec{sweep.sensor, drift::DriftKind::offset, level, 0}.validate();
          if (sweep.kinds.empty() || sweep.levels.empty())
            throw ConfigError("evaluation.drifts[]: kinds and levels must be non-empty");
          c.drifts.push_back(std::move(sweep));
        }
      }
    }
    c.set_seed(seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.cluster_k < 1) throw ConfigError("evaluation.cluster_k must be at least 1");
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) throw ConfigError("train.split_ratio must lie in (0, 1)");
  // Network width is unknown until the data is loaded; validate the rest now.
  TrainConfig probe = c.train;
  probe.network = c.network(1);
  probe.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const PersistenceError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_experiment_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

data::CycleDataset load_experiment_data(const ExperimentConfig& config, int jobs) {
  const DataSource& src = config.data;
  if (src.kind == DataSource::Kind::directory) return data::load_raw_dataset(src.path, jobs);
  data::CycleDataset ds = data::generate_synthetic(src.synthetic, 0.0);
  for (std::size_t i = 0; i < src.degraded_coolers.size(); ++i) {
    data::SyntheticConfig block = src.synthetic;
    block.cycles = src.degraded_cycles;
    block.seed = src.synthetic.seed + 1 + i;
    auto degraded = data::generate_synthetic(block, data::degradation_for_cooler(src.degraded_coolers[i]));
    for (auto& rec : degraded.profile) rec.cooler = src.degraded_coolers[i];
    ds = data::concat(ds, degraded);
  }
  return ds;
}

std::uint64_t drift_seed(std::uint64_t seed, Index scenario) {
  auto engine = make_engine(seed, streams::noise, static_cast<std::uint64_t>(scenario) + 1);
  return engine();
}

}  // namespace bae
