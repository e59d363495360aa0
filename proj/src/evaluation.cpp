#include "bae/evaluation.hpp"

#include "bae/dataset.hpp"
#include "bae/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <regex>

namespace bae::eval {

using nlohmann::json;

MetricTrio trio(const PredictionRecord& r) { return {r.recon_loss, r.epistemic_mean, r.aleatoric_mean}; }

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MetricSummary summarize_values(std::span<const double> values) {
  if (values.empty()) throw ConfigError("cannot summarize an empty scenario");
  double sum = 0;
  for (double v : values) sum += v;
  const std::vector<double> copy(values.begin(), values.end());
  return {sum / static_cast<double>(values.size()), quantile(copy, 0.5), quantile(copy, 0.05), quantile(copy, 0.95)};
}

ScenarioResult summarize(std::vector<MetricTrio> cycles, const std::string& label, const std::string& sensor) {
  if (cycles.empty()) throw ConfigError("scenario '" + label + "' has no cycles");
  ScenarioResult out;
  out.label = label;
  out.sensor = sensor;
  std::vector<double> recon, epi, alea;
  for (const auto& t : cycles) {
    recon.push_back(t.recon_loss);
    epi.push_back(t.epistemic);
    alea.push_back(t.aleatoric);
  }
  out.recon_loss = summarize_values(recon);
  out.epistemic = summarize_values(epi);
  out.aleatoric = summarize_values(alea);
  out.cycles = std::move(cycles);
  return out;
}

ScenarioResult summarize(std::span<const PredictionRecord> records, const std::string& label,
                         const std::string& sensor) {
  std::vector<MetricTrio> cycles;
  cycles.reserve(records.size());
  for (const auto& r : records) cycles.push_back(trio(r));
  return summarize(std::move(cycles), label, sensor);
}

bool valid_scenario_label(std::string_view label) {
  static const std::regex pattern("healthy|cooler_[0-9]+|noise_[0-9]+|offset_[0-9]+");
  return std::regex_match(label.begin(), label.end(), pattern);
}

std::string scenario_group(std::string_view label) {
  if (!valid_scenario_label(label)) throw ConfigError("unknown scenario label '" + std::string(label) + "'");
  return std::string(label.substr(0, label.find('_')));
}

Matrix cluster_space(std::span<const MetricTrio> cycles) {
  Matrix pts(static_cast<Index>(cycles.size()), 3);
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    const double v[3] = {cycles[i].recon_loss, cycles[i].epistemic, cycles[i].aleatoric};
    for (int a = 0; a < 3; ++a) pts(static_cast<Index>(i), a) = std::log10(std::max(v[a], kLogFloor));
  }
  if (pts.rows() == 0) return pts;
  for (Index a = 0; a < 3; ++a) {
    const double mean = pts.col(a).mean();
    const double sd = std::sqrt((pts.col(a).array() - mean).square().mean());
    pts.col(a).array() -= mean;
    if (sd > 0) pts.col(a) /= sd;
  }
  return pts;
}

namespace {

double sq_dist(const Matrix& points, Index i, const Matrix& centroids, Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

/// Assigns every point to its nearest centroid (lowest index on ties); returns inertia.
double assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels) {
  double inertia = 0;
  for (Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = sq_dist(points, i, centroids, 0);
    for (Index c = 1; c < centroids.rows(); ++c) {
      const double d = sq_dist(points, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    inertia += best_d;
  }
  return inertia;
}

Matrix seed_plus_plus(const Matrix& points, int k, std::mt19937_64& engine) {
  const Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(engine));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(points, i, centroids, 0);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (double v : d2) total += v;
    Index pick = 0;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(engine);
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target < 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(engine);
    }
    centroids.row(c) = points.row(pick);
    for (Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(points, i, centroids, c));
  }
  return centroids;
}

}  // namespace

ClusterReport kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (points.rows() < k)
    throw ConfigError("k-means: " + std::to_string(points.rows()) + " points cannot form " + std::to_string(k) +
                      " clusters");
  if (max_iter < 1) throw ConfigError("k-means needs max_iter >= 1");
  if (!points.allFinite()) throw NumericError("points", "k-means input contains non-finite values");

  const Index n = points.rows();
  auto engine = make_engine(seed, streams::kmeans);
  ClusterReport report;
  report.k = k;
  report.centroids = seed_plus_plus(points, k, engine);
  report.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);

  for (int iter = 0; iter < max_iter; ++iter) {
    const double inertia = assign(points, report.centroids, labels);
    report.iterations = iter + 1;
    if (labels == report.assignments) {
      report.converged = true;
      report.inertia_trace.push_back(inertia);
      break;
    }
    report.assignments = labels;

    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index far = -1;
      double far_d = -1;
      for (Index i = 0; i < n; ++i) {
        const int own = report.assignments[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(own)] < 2) continue;
        const double d = sq_dist(points, i, report.centroids, own);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) break;
      --counts[static_cast<std::size_t>(report.assignments[static_cast<std::size_t>(far)])];
      report.assignments[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      report.centroids.row(c) = points.row(far);
    }
    report.inertia_trace.push_back(inertia);

    Matrix sums = Matrix::Zero(k, points.cols());
    for (Index i = 0; i < n; ++i) sums.row(report.assignments[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c)
      report.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }

  report.inertia = 0;
  for (Index i = 0; i < n; ++i)
    report.inertia += sq_dist(points, i, report.centroids, report.assignments[static_cast<std::size_t>(i)]);
  return report;
}

double cluster_purity(std::span<const int> assignments, std::span<const int> labels) {
  if (assignments.size() != labels.size())
    throw DimensionError("cluster_purity: " + std::to_string(assignments.size()) + " assignments vs " +
                         std::to_string(labels.size()) + " labels");
  if (assignments.empty()) throw ConfigError("cluster_purity of an empty assignment");
  std::map<int, std::map<int, Index>> counts;
  for (std::size_t i = 0; i < assignments.size(); ++i) ++counts[assignments[i]][labels[i]];
  Index majority = 0;
  for (const auto& [cluster, per_label] : counts) {
    Index best = 0;
    for (const auto& [label, c] : per_label) best = std::max(best, c);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(assignments.size());
}

void export_metrics_csv(std::span<const ScenarioResult> results, const std::filesystem::path& path) {
  std::string out = "scenario,sensor,cycle,recon_loss,epistemic,aleatoric\n";
  for (const auto& r : results) {
    if (!valid_scenario_label(r.label)) throw ConfigError("unknown scenario label '" + r.label + "'");
    if (r.sensor.find_first_of(",\n\"") != std::string::npos)
      throw ConfigError("sensor name '" + r.sensor + "' cannot be written to CSV");
    for (std::size_t i = 0; i < r.cycles.size(); ++i) {
      out += r.label + ',' + r.sensor + ',' + std::to_string(i) + ',';
      io::append_double(out, r.cycles[i].recon_loss);
      out.push_back(',');
      io::append_double(out, r.cycles[i].epistemic);
      out.push_back(',');
      io::append_double(out, r.cycles[i].aleatoric);
      out.push_back('\n');
    }
  }
  io::write_file_atomic(path, out);
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const PersistenceError&) {
    throw IngestionError("cannot read metrics file " + path.string());
  }
  std::vector<MetricRow> rows;
  std::size_t pos = 0;
  Index line_no = 0;
  auto fail = [&](const std::string& what) {
    throw IngestionError(path.string() + " line " + std::to_string(line_no) + ": " + what);
  };
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != "scenario,sensor,cycle,recon_loss,epistemic,aleatoric") fail("unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != 6) fail("expected 6 fields, found " + std::to_string(f.size()));
    MetricRow row;
    row.scenario = std::string(f[0]);
    if (!valid_scenario_label(row.scenario)) fail("unknown scenario '" + row.scenario + "'");
    row.sensor = std::string(f[1]);
    const auto cycle = io::parse_int(f[2]);
    const auto a = io::parse_double(f[3]);
    const auto b = io::parse_double(f[4]);
    const auto c = io::parse_double(f[5]);
    if (!cycle || !a || !b || !c) fail("bad numeric field");
    row.cycle = static_cast<Index>(*cycle);
    row.metrics = {*a, *b, *c};
    rows.push_back(std::move(row));
  }
  if (line_no == 0) throw IngestionError(path.string() + ": empty metrics file");
  return rows;
}

void export_trace_csv(Index cycle, const Vector& actual, const PredictionRecord& record,
                      std::span<const std::string> sensor_names, const std::filesystem::path& path) {
  const Index D = data::kCycleSeconds * static_cast<Index>(sensor_names.size());
  if (actual.size() != D || record.mean.size() != D || record.epistemic.size() != D || record.aleatoric.size() != D)
    throw DimensionError("export_trace_csv: vectors do not match " + std::to_string(sensor_names.size()) +
                         " sensors x 60 seconds");
  std::string out = "cycle,sensor,second,actual,reconstructed,epistemic_std,aleatoric_std\n";
  for (Index k = 0; k < static_cast<Index>(sensor_names.size()); ++k) {
    for (Index t = 0; t < data::kCycleSeconds; ++t) {
      const Index f = data::feature_index(k, t);
      out += std::to_string(cycle) + ',' + sensor_names[static_cast<std::size_t>(k)] + ',' + std::to_string(t) + ',';
      io::append_double(out, actual(f));
      out.push_back(',');
      io::append_double(out, record.mean(f));
      out.push_back(',');
      io::append_double(out, std::sqrt(record.epistemic(f)));
      out.push_back(',');
      io::append_double(out, std::sqrt(record.aleatoric(f)));
      out.push_back('\n');
    }
  }
  io::write_file_atomic(path, out);
}

std::string cluster_report_json(const ClusterReport& report, std::span<const std::string> group_names) {
  json j;
  j["k"] = report.k;
  j["points"] = report.assignments.size();
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["inertia"] = report.inertia;
  if (report.purity >= 0) j["purity"] = report.purity;
  j["centroids"] = json::array();
  for (Index c = 0; c < report.centroids.rows(); ++c) {
    json row = json::array();
    for (Index a = 0; a < report.centroids.cols(); ++a) row.push_back(report.centroids(c, a));
    j["centroids"].push_back(row);
  }
  std::vector<Index> sizes(static_cast<std::size_t>(report.k), 0);
  for (int a : report.assignments) ++sizes[static_cast<std::size_t>(a)];
  j["cluster_sizes"] = sizes;
  if (!group_names.empty()) j["groups"] = std::vector<std::string>(group_names.begin(), group_names.end());
  j["assignments"] = report.assignments;
  return j.dump(2) + "\n";
}

std::string summary_json(std::span<const ScenarioResult> results) {
  auto stats = [](const MetricSummary& s) {
    return json{{"mean", s.mean}, {"median", s.median}, {"q05", s.q05}, {"q95", s.q95}};
  };
  json j = json::array();
  for (const auto& r : results) {
    j.push_back({{"scenario", r.label},
                 {"sensor", r.sensor},
                 {"cycles", r.cycles.size()},
                 {"recon_loss", stats(r.recon_loss)},
                 {"epistemic", stats(r.epistemic)},
                 {"aleatoric", stats(r.aleatoric)}});
  }
  return j.dump(2) + "\n";
}

}  // namespace bae::eval
