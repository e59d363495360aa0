#include "commands.hpp"

#include "bae/dataset.hpp"
#include "bae/drift.hpp"
#include "bae/ensemble.hpp"
#include "bae/evaluation.hpp"
#include "bae/experiment.hpp"
#include "bae/io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <thread>

namespace bae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "Experiment config file (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "Override the global seed");
  cmd->add_option("--out", o.out, "Output directory (default: the config's output)");
  cmd->add_option("--jobs", o.jobs, "Worker threads for member training / scenario evaluation")
      ->check(CLI::PositiveNumber);
}

struct DriftOptions {
  std::string sensor;
  std::string kind;
  double level = 0.0;
};

void add_drift(CLI::App* cmd, DriftOptions& d, bool required) {
  auto* s = cmd->add_option("--sensor", d.sensor, "Sensor to perturb");
  auto* k = cmd->add_option("--kind", d.kind, "Drift kind")->check(CLI::IsMember({"noise", "offset"}));
  auto* l = cmd->add_option("--level", d.level, "Drift level as a fraction of the sensor mean (e.g. 0.05..0.25)")
                ->check(CLI::NonNegativeNumber);
  if (required) {
    s->required();
    k->required();
    l->required();
  } else {
    s->needs(k)->needs(l);
    k->needs(s);
    l->needs(s);
  }
}

ExperimentConfig load_config(const CommonOptions& o) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (o.seed) cfg.set_seed(*o.seed);
  if (!o.out.empty()) cfg.output = o.out;
  return cfg;
}

fs::path output_dir(const CommonOptions& o, const std::optional<ExperimentConfig>& cfg) {
  if (!o.out.empty()) return o.out;
  if (cfg) return cfg->output;
  throw ConfigError("--out is required without --config");
}

std::string cooler_label(double cooler) {
  return "cooler_" + std::to_string(static_cast<long long>(std::llround(cooler)));
}

/// Checks that the dataset matches the sensors the model was trained on.
void check_compatible(const EnsembleModel& model, const data::CycleDataset& ds) {
  const Index d_data = data::kCycleSeconds * ds.sensor_count();
  if (d_data != model.input_dim())
    throw DimensionError("model expects D = " + std::to_string(model.input_dim()) + " features, dataset provides D = " +
                         std::to_string(d_data) + " (" + std::to_string(ds.sensor_count()) + " sensors x 60 s)");
  for (Index k = 0; k < ds.sensor_count() && k < static_cast<Index>(model.sensors.size()); ++k) {
    const auto& s = ds.sensors[k];
    if (s.name != model.sensors[k].name || s.rate != model.sensors[k].rate)
      throw DimensionError("dataset sensor " + std::to_string(k) + " is " + s.name + " @ " + std::to_string(s.rate) +
                           " Hz, model was trained with " + model.sensors[k].name + " @ " +
                           std::to_string(model.sensors[k].rate) + " Hz");
  }
}

void check_indices(const std::vector<Index>& rows, const data::CycleDataset& ds, const char* what) {
  for (Index r : rows)
    if (r < 0 || r >= ds.cycles())
      throw DimensionError(std::string("model ") + what + " index " + std::to_string(r) + " outside the dataset (" +
                           std::to_string(ds.cycles()) + " cycles)");
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure by index.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min<int>(jobs, static_cast<int>(n)); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = cfg.output;
  const auto ds = load_experiment_data(cfg, o.jobs);
  const auto split = data::split_healthy(ds, cfg.split_ratio, cfg.seed);
  const auto train_ds = ds.subset(split.train);
  const auto scaler = data::fit_scaler(data::resample(train_ds));
  const Matrix x = data::features(train_ds, scaler);

  TrainConfig tc = cfg.train;
  tc.network = cfg.network(x.cols());
  EnsembleModel model = train_ensemble(x, tc, o.jobs);
  model.scaler = scaler;
  for (const auto& s : ds.sensors) model.sensors.push_back({s.name, s.name + ".txt", s.rate});
  model.metadata.train_indices = split.train;
  model.metadata.test_indices = split.test;

  json report;
  report["seed"] = cfg.seed;
  report["network"] = tc.network.widths;
  report["members"] = tc.members;
  report["lambda"] = tc.lambda;
  report["epochs"] = tc.epochs;
  report["batch_size"] = tc.batch_size;
  report["learning_rate"] = tc.learning_rate;
  report["n_train"] = split.train.size();
  report["n_test"] = split.test.size();
  report["member_seeds"] = model.metadata.member_seeds;
  report["initial_loss"] = model.metadata.initial_loss;
  report["final_loss"] = model.metadata.final_loss;
  report["loss_traces"] = model.metadata.loss_traces;
  report["scaler_warnings"] = scaler.warnings;

  save_model(model, dir / "model.bae");
  io::write_file_atomic(dir / "training-report.json", report.dump(2) + "\n");

  out << "trained " << tc.members << " members on " << split.train.size() << " cycles (D = " << x.cols() << ")\n";
  for (Index j = 0; j < model.size(); ++j)
    out << "  member " << j << ": loss " << model.metadata.initial_loss[j] << " -> " << model.metadata.final_loss[j]
        << "\n";
  for (const auto& w : scaler.warnings) out << "  warning: " << w << "\n";
  out << "model written to " << (dir / "model.bae").string() << "\n";
  return kExitOk;
}

struct Scenario {
  std::string label;
  std::string sensor;
  std::function<data::CycleDataset()> make;
};

int cmd_evaluate(const CommonOptions& o, const std::string& model_path, std::ostream& out) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = cfg.output;
  const EnsembleModel model = load_model(model_path.empty() ? dir / "model.bae" : fs::path(model_path));
  const auto ds = load_experiment_data(cfg, o.jobs);
  check_compatible(model, ds);
  check_indices(model.metadata.test_indices, ds, "test");
  check_indices(model.metadata.train_indices, ds, "train");
  const auto test_ds = ds.subset(model.metadata.test_indices);
  const auto train_ds = ds.subset(model.metadata.train_indices);

  std::vector<Scenario> scenarios;
  std::vector<std::string> skipped;
  scenarios.push_back({"healthy", "", [&] { return test_ds; }});
  const auto labels = data::cooler_labels(ds);
  for (double cooler : cfg.real_drift) {
    const bool present = std::any_of(labels.begin(), labels.end(), [&](double l) { return std::abs(l - cooler) < 1e-9; });
    if (!present) {
      skipped.push_back(cooler_label(cooler) + " (no cycles)");
      continue;
    }
    scenarios.push_back({cooler_label(cooler), "", [&ds, cooler] {
                           const auto rows = data::select_condition(ds, cooler);
                           return ds.subset(rows);
                         }});
  }
  Index drift_index = 0;
  for (const auto& sweep : cfg.drifts) {
    const auto ref = drift::sensor_reference(train_ds, sweep.sensor);
    for (const auto& w : ref.warnings) out << "warning: " << w << "\n";
    for (auto kind : sweep.kinds)
      for (double level : sweep.levels) {
        const drift::DriftSpec spec{sweep.sensor, kind, level, drift_seed(cfg.seed, drift_index++)};
        scenarios.push_back({spec.label(), spec.sensor, [&test_ds, spec, ref] { return drift::inject(test_ds, spec, ref); }});
      }
  }

  std::vector<std::optional<eval::ScenarioResult>> results(scenarios.size());
  parallel_for(scenarios.size(), o.jobs, [&](std::size_t i) {
    const auto cycles = scenarios[i].make();
    if (cycles.cycles() == 0) return;
    const Matrix x = data::features(cycles, model.scaler);
    const auto records = predict(model, x, cfg.reconstruction);
    results[i] = eval::summarize(records, scenarios[i].label, scenarios[i].sensor);
  });

  std::vector<eval::ScenarioResult> done;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (results[i]) done.push_back(std::move(*results[i]));
    else skipped.push_back(scenarios[i].label + " (no cycles)");
  }
  eval::export_metrics_csv(done, dir / "metrics.csv");
  json summary;
  summary["scenarios"] = json::parse(eval::summary_json(done));
  summary["skipped"] = skipped;
  io::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");

  out << std::left << std::setw(12) << "scenario" << std::setw(8) << "sensor" << std::setw(8) << "cycles"
      << std::setw(16) << "recon_loss" << std::setw(16) << "epistemic" << "aleatoric\n";
  for (const auto& r : done)
    out << std::left << std::setw(12) << r.label << std::setw(8) << (r.sensor.empty() ? "-" : r.sensor) << std::setw(8)
        << r.cycles.size() << std::setw(16) << r.recon_loss.mean << std::setw(16) << r.epistemic.mean
        << r.aleatoric.mean << "\n";
  for (const auto& s : skipped) out << "skipped: " << s << "\n";
  out << "metrics written to " << (dir / "metrics.csv").string() << "\n";
  return kExitOk;
}

int cmd_inject(const CommonOptions& o, const DriftOptions& d, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("inject: --out DIR is required");
  const ExperimentConfig cfg = load_config(o);
  const auto ds = load_experiment_data(cfg, o.jobs);
  const auto split = data::split_healthy(ds, cfg.split_ratio, cfg.seed);
  const auto ref = drift::sensor_reference(ds.subset(split.train), d.sensor);
  const drift::DriftSpec spec{d.sensor, drift::parse_kind(d.kind), d.level, drift_seed(cfg.seed, 0)};
  const auto perturbed = drift::inject(ds, spec, ref);
  data::write_raw_dataset(perturbed, o.out);
  for (const auto& w : ref.warnings) out << "warning: " << w << "\n";
  out << spec.label() << " on " << spec.sensor << " (reference " << ref.referent << ") written to " << o.out << "\n";
  return kExitOk;
}

int cmd_cluster(const CommonOptions& o, const std::string& metrics_path, int k, const std::string& scenario_filter,
                std::ostream& out) {
  std::optional<ExperimentConfig> cfg;
  if (!o.config.empty()) cfg = load_config(o);
  const fs::path dir = output_dir(o, cfg);
  const fs::path metrics = metrics_path.empty() ? dir / "metrics.csv" : fs::path(metrics_path);
  const std::uint64_t seed = o.seed ? *o.seed : (cfg ? cfg->seed : 0);
  if (k <= 0) k = cfg ? cfg->cluster_k : 4;

  std::vector<std::string> keep;
  if (!scenario_filter.empty())
    for (auto s : io::split(scenario_filter, ',')) keep.emplace_back(s);

  std::vector<eval::MetricTrio> trios;
  std::vector<std::string> groups;
  std::vector<int> labels;
  std::map<std::string, int> group_ids;
  for (const auto& row : eval::read_metrics_csv(metrics)) {
    if (!keep.empty() && std::find(keep.begin(), keep.end(), row.scenario) == keep.end()) continue;
    const auto g = eval::scenario_group(row.scenario);
    if (!group_ids.contains(g)) {
      group_ids.emplace(g, static_cast<int>(groups.size()));
      groups.push_back(g);
    }
    trios.push_back(row.metrics);
    labels.push_back(group_ids.at(g));
  }
  auto report = eval::kmeans(eval::cluster_space(trios), k, seed);
  report.purity = eval::cluster_purity(report.assignments, labels);
  io::write_file_atomic(dir / "cluster-report.json", eval::cluster_report_json(report, groups));
  out << "k-means k=" << k << " over " << trios.size() << " cycles (" << groups.size() << " groups): purity "
      << report.purity << ", inertia " << report.inertia << "\n";
  out << "report written to " << (dir / "cluster-report.json").string() << "\n";
  return kExitOk;
}

int cmd_trace(const CommonOptions& o, const std::string& model_path, long long cycle, const DriftOptions& d,
              std::ostream& out) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = cfg.output;
  const EnsembleModel model = load_model(model_path.empty() ? dir / "model.bae" : fs::path(model_path));
  const auto ds = load_experiment_data(cfg, o.jobs);
  check_compatible(model, ds);
  if (cycle < 0 || cycle >= ds.cycles())
    throw ConfigError("cycle index " + std::to_string(cycle) + " out of range [0, " + std::to_string(ds.cycles()) + ")");
  const std::vector<Index> rows{static_cast<Index>(cycle)};
  auto one = ds.subset(rows);
  std::string suffix;
  if (!d.sensor.empty()) {
    check_indices(model.metadata.train_indices, ds, "train");
    const auto ref = drift::sensor_reference(ds.subset(model.metadata.train_indices), d.sensor);
    const drift::DriftSpec spec{d.sensor, drift::parse_kind(d.kind), d.level, drift_seed(cfg.seed, 0)};
    one = drift::inject(one, spec, ref);
    suffix = "-" + spec.sensor + "-" + spec.label();
  }
  const Matrix x = data::features(one, model.scaler);
  const auto rec = predict(model, x, cfg.reconstruction);
  const fs::path path = dir / ("trace-" + std::to_string(cycle) + suffix + ".csv");
  eval::export_trace_csv(static_cast<Index>(cycle), x.row(0).transpose(), rec.front(), ds.sensor_names(), path);
  out << "cycle " << cycle << ": recon_loss " << rec.front().recon_loss << ", epistemic " << rec.front().epistemic_mean
      << ", aleatoric " << rec.front().aleatoric_mean << "\n";
  out << "trace written to " << path.string() << "\n";
  return kExitOk;
}

int cmd_generate(const CommonOptions& o, const data::SyntheticConfig& flags, std::optional<double> degradation,
                 std::ostream& out) {
  if (o.out.empty()) throw ConfigError("generate-synthetic: --out DIR is required");
  data::CycleDataset ds;
  if (!o.config.empty() && !degradation) {
    ExperimentConfig cfg = load_config(o);
    if (cfg.data.kind != DataSource::Kind::synthetic) throw ConfigError("config data source is not synthetic");
    if (o.seed) cfg.data.synthetic.seed = *o.seed;
    ds = load_experiment_data(cfg);
  } else {
    data::SyntheticConfig sc = flags;
    if (o.seed) sc.seed = *o.seed;
    ds = data::generate_synthetic(sc, degradation.value_or(0.0));
  }
  data::write_raw_dataset(ds, o.out);
  out << "wrote " << ds.cycles() << " cycles x " << ds.sensor_count() << " sensors to " << o.out << "\n";
  return kExitOk;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config:
      return kExitConfig;
    case ErrorKind::dimension:
    case ErrorKind::ingestion:
    case ErrorKind::persistence:
      return kExitData;
    case ErrorKind::numeric:
    case ErrorKind::training:
      return kExitNumeric;
  }
  return kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian autoencoder ensembles for sensor drift detection"};
  app.name(args.empty() ? "bae" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);

  CommonOptions common;
  DriftOptions drift_opts;
  std::string model_path;
  std::string metrics_path;
  std::string scenario_filter;
  int k = 0;
  long long cycle = -1;
  data::SyntheticConfig synth;
  std::optional<double> degradation;

  auto* train = app.add_subcommand("train", "Fit the scaler and train the ensemble on the healthy split");
  add_common(train, common, true);

  auto* evaluate = app.add_subcommand("evaluate", "Score healthy, real-drift and injected-drift scenarios");
  add_common(evaluate, common, true);
  evaluate->add_option("--model", model_path, "Model file (default: <out>/model.bae)");

  auto* inject = app.add_subcommand("inject", "Write a copy of the dataset with one sensor perturbed");
  add_common(inject, common, true);
  add_drift(inject, drift_opts, true);

  auto* cluster = app.add_subcommand("cluster", "k-means over the per-cycle metric trio");
  add_common(cluster, common, false);
  cluster->add_option("--metrics", metrics_path, "Metrics CSV from evaluate (default: <out>/metrics.csv)");
  cluster->add_option("--k", k, "Number of clusters (default: config value or 4)")->check(CLI::PositiveNumber);
  cluster->add_option("--scenarios", scenario_filter, "Comma-separated scenario labels to include (default: all)");

  auto* trace = app.add_subcommand("trace", "Per-sensor reconstruction and uncertainty for one cycle");
  add_common(trace, common, true);
  trace->add_option("--model", model_path, "Model file (default: <out>/model.bae)");
  trace->add_option("--cycle", cycle, "Cycle index in the dataset")->required();
  add_drift(trace, drift_opts, false);

  auto* generate = app.add_subcommand("generate-synthetic", "Write a synthetic dataset directory");
  add_common(generate, common, false);
  generate->add_option("--sensors", synth.sensors, "Number of sensors")->check(CLI::Range(2, 1000));
  generate->add_option("--cycles", synth.cycles, "Number of cycles")->check(CLI::Range(10, 1000000));
  generate->add_option("--degradation", degradation, "Single degradation level in [0, 1] (ignores --config)")
      ->check(CLI::Range(0.0, 1.0));

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("bae");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(common, out);
    if (evaluate->parsed()) return cmd_evaluate(common, model_path, out);
    if (inject->parsed()) return cmd_inject(common, drift_opts, out);
    if (cluster->parsed()) return cmd_cluster(common, metrics_path, k, scenario_filter, out);
    if (trace->parsed()) return cmd_trace(common, model_path, cycle, drift_opts, out);
    if (generate->parsed()) return cmd_generate(common, synth, degradation, out);
  } catch (const Error& e) {
    err << app.get_name() << ": error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    err << app.get_name() << ": error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace bae::cli
