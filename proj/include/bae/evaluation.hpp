#ifndef BAE_EVALUATION_HPP
#define BAE_EVALUATION_HPP

#include "bae/ensemble.hpp"
#include "bae/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bae::eval {

/// The three per-cycle scores.
struct MetricTrio {
  double recon_loss = 0;
  double epistemic = 0;
  double aleatoric = 0;
};

MetricTrio trio(const PredictionRecord& r);

struct MetricSummary {
  double mean = 0;
  double median = 0;
  double q05 = 0;
  double q95 = 0;
};

struct ScenarioResult {
  std::string label;   // healthy | cooler_<p> | noise_<p> | offset_<p>
  std::string sensor;  // perturbed sensor for injected drifts, else empty
  std::vector<MetricTrio> cycles;
  MetricSummary recon_loss;
  MetricSummary epistemic;
  MetricSummary aleatoric;
};

/// Quantile with linear interpolation between order statistics
/// (position p * (n - 1) in the sorted sample).
double quantile(std::vector<double> values, double p);
MetricSummary summarize_values(std::span<const double> values);

ScenarioResult summarize(std::span<const PredictionRecord> records, const std::string& label,
                         const std::string& sensor = {});
ScenarioResult summarize(std::vector<MetricTrio> cycles, const std::string& label, const std::string& sensor = {});

/// True for labels of the closed scenario vocabulary.
bool valid_scenario_label(std::string_view label);
/// healthy / cooler / noise / offset.
std::string scenario_group(std::string_view label);

inline constexpr double kLogFloor = 1e-12;

/// Per-cycle trio -> log10 (floored at kLogFloor) -> per-axis standardization.
Matrix cluster_space(std::span<const MetricTrio> cycles);

struct ClusterReport {
  int k = 0;
  std::vector<int> assignments;
  Matrix centroids;  // k x dims, in the clustered space
  double inertia = 0;
  std::vector<double> inertia_trace;  // after every assignment step
  int iterations = 0;
  bool converged = false;
  double purity = -1;  // set when labels are known
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or max_iter is reached. Empty clusters are re-seeded with the
/// point farthest from its centroid.
ClusterReport kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iter = 300);

/// Sum over clusters of the majority-label count, divided by n.
double cluster_purity(std::span<const int> assignments, std::span<const int> labels);

/// One row per cycle: scenario,sensor,cycle,recon_loss,epistemic,aleatoric.
void export_metrics_csv(std::span<const ScenarioResult> results, const std::filesystem::path& path);

struct MetricRow {
  std::string scenario;
  std::string sensor;
  Index cycle = 0;
  MetricTrio metrics;
};
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

/// One row per (sensor, second), tagged with the cycle index: actual and reconstructed values with the
/// epistemic and aleatoric standard deviations, in standardized units.
void export_trace_csv(Index cycle, const Vector& actual, const PredictionRecord& record,
                      std::span<const std::string> sensor_names, const std::filesystem::path& path);

/// Structured text (JSON) rendering of a cluster report.
std::string cluster_report_json(const ClusterReport& report, std::span<const std::string> group_names = {});
/// JSON summary of scenario statistics.
std::string summary_json(std::span<const ScenarioResult> results);

}  // namespace bae::eval

#endif  // BAE_EVALUATION_HPP
