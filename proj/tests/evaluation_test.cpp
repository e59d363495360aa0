#include "doctest.h"
#include "support.hpp"

#include "bae/evaluation.hpp"
#include "bae/io.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace bae;
using namespace bae::eval;

namespace {

// Order-statistic quantile computed independently: sort, then interpolate by hand.
double sorted_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p;
  const auto i = static_cast<std::size_t>(h);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1 - (h - i)) + v[i + 1] * (h - i);
}

PredictionRecord record(Index d, double fill) {
  PredictionRecord r;
  r.mean = Vector::Constant(d, fill);
  r.epistemic = Vector::Constant(d, 0.25);
  r.aleatoric = Vector::Constant(d, 4.0);
  return r;
}

}  // namespace

TEST_CASE("summary statistics") {
  SUBCASE("one to five") {
    const std::vector<double> v{5, 1, 4, 2, 3};
    const auto s = summarize_values(v);
    CHECK(s.mean == 3.0);
    CHECK(s.median == 3.0);
    CHECK(s.q05 == doctest::Approx(1.2));
    CHECK(s.q95 == doctest::Approx(4.8));
  }
  SUBCASE("single value") {
    const std::vector<double> v{2.5};
    const auto s = summarize_values(v);
    CHECK(s.mean == 2.5);
    CHECK(s.median == 2.5);
    CHECK(s.q05 == 2.5);
  }
  SUBCASE("matches a sort-based oracle and a streaming mean") {
    std::mt19937_64 rng(4);
    std::lognormal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(137);
    for (auto& x : v) x = dist(rng);
    const auto s = summarize_values(v);
    for (double p : {0.05, 0.5, 0.95}) CHECK(quantile(v, p) == doctest::Approx(sorted_quantile(v, p)).epsilon(1e-14));
    double running = 0;
    for (std::size_t i = 0; i < v.size(); ++i) running += (v[i] - running) / static_cast<double>(i + 1);
    CHECK(s.mean == doctest::Approx(running).epsilon(1e-12));
    CHECK(s.q95 == doctest::Approx(sorted_quantile(v, 0.95)));
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(summarize_values(std::vector<double>{}), ConfigError);
    CHECK_THROWS_AS(summarize(std::vector<MetricTrio>{}, "healthy"), ConfigError);
  }
  SUBCASE("scenario result keeps every cycle") {
    std::vector<MetricTrio> cycles{{1, 2, 3}, {3, 2, 1}};
    const auto r = summarize(cycles, "noise_5", "PS1");
    CHECK(r.cycles.size() == 2);
    CHECK(r.recon_loss.mean == 2.0);
    CHECK(r.aleatoric.median == 2.0);
  }
}

TEST_CASE("scenario labels") {
  for (const char* ok : {"healthy", "cooler_20", "cooler_3", "noise_25", "offset_5"}) CHECK(valid_scenario_label(ok));
  for (const char* bad : {"", "Healthy", "noise", "noise_", "drift_5", "offset_5x"}) CHECK_FALSE(valid_scenario_label(bad));
  CHECK(scenario_group("offset_15") == "offset");
  CHECK(scenario_group("healthy") == "healthy");
}

TEST_CASE("cluster space") {
  const std::vector<MetricTrio> cycles{{1, 1, 1}, {10, 10, 10}, {0, 0, 0}};
  const Matrix p = cluster_space(cycles);
  CHECK(p.allFinite());
  for (Index a = 0; a < 3; ++a) {
    CHECK(std::abs(p.col(a).mean()) < 1e-12);
    CHECK(std::sqrt(p.col(a).squaredNorm() / 3) == doctest::Approx(1.0));
  }
  // Logs are 0, 1, -12 on every axis, so the columns coincide after standardizing.
  CHECK((p.col(0) - p.col(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("k-means") {
  SUBCASE("k = 1 gives the mean") {
    const Matrix pts = test::random_matrix(30, 3, 1);
    const auto r = kmeans(pts, 1, 0);
    CHECK((r.centroids.row(0) - pts.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.converged);
  }
  SUBCASE("separated blobs are recovered") {
    Matrix pts = test::random_matrix(80, 3, 2);
    std::vector<int> labels(80);
    for (Index i = 0; i < 80; ++i) {
      labels[i] = i % 2;
      if (i % 2) pts.row(i).array() += 10.0;
    }
    const auto r = kmeans(pts, 2, 3);
    CHECK(cluster_purity(r.assignments, labels) == 1.0);
  }
  SUBCASE("inertia never increases") {
    const Matrix pts = test::random_matrix(200, 3, 5);
    const auto r = kmeans(pts, 6, 9);
    REQUIRE(r.inertia_trace.size() >= 2);
    for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-9);
  }
  SUBCASE("deterministic per seed, purity invariant to point order") {
    Matrix pts = test::random_matrix(60, 3, 6);
    std::vector<int> labels(60);
    for (Index i = 0; i < 60; ++i) {
      labels[i] = static_cast<int>(i % 3);
      pts.row(i).array() += 6.0 * (i % 3);
    }
    const auto a = kmeans(pts, 3, 1), b = kmeans(pts, 3, 1);
    CHECK(a.assignments == b.assignments);
    Matrix rev = pts.colwise().reverse();
    std::vector<int> rev_labels(labels.rbegin(), labels.rend());
    CHECK(cluster_purity(kmeans(rev, 3, 1).assignments, rev_labels) == cluster_purity(a.assignments, labels));
  }
  SUBCASE("duplicate points still give k non-empty clusters") {
    Matrix pts = Matrix::Zero(10, 3);
    pts.row(9).setConstant(1.0);
    const auto r = kmeans(pts, 3, 0);
    CHECK(r.assignments.size() == 10);
    CHECK(r.centroids.allFinite());
  }
  SUBCASE("more clusters than points") { CHECK_THROWS_AS(kmeans(Matrix::Zero(2, 3), 3, 0), ConfigError); }
}

TEST_CASE("purity") {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  CHECK(cluster_purity(labels, labels) == 1.0);
  const std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
  CHECK(cluster_purity(relabeled, labels) == 1.0);
  const std::vector<int> one(4, 0), two{0, 0, 1, 1};
  CHECK(cluster_purity(one, two) == 0.5);
  CHECK_THROWS_AS(cluster_purity(one, labels), DimensionError);

  SUBCASE("random assignments approach 1/L") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> pick(0, 3);
    const int n = 200000;
    std::vector<int> a(n), l(n);
    for (int i = 0; i < n; ++i) {
      a[i] = pick(rng);
      l[i] = pick(rng);
    }
    CHECK(cluster_purity(a, l) == doctest::Approx(0.25).epsilon(0.02));
  }
}

TEST_CASE("metrics CSV") {
  test::TempDir dir("metrics");
  std::vector<ScenarioResult> results;
  results.push_back(summarize(std::vector<MetricTrio>{{0.1, 1.0 / 3.0, 2e-9}, {0.2, 0.3, 0.4}}, "healthy"));
  results.push_back(summarize(std::vector<MetricTrio>{{5.5, 1e300, 0.0}}, "offset_25", "PS1"));
  export_metrics_csv(results, dir / "m.csv");
  const auto text = io::read_file(dir / "m.csv");
  CHECK(text.substr(0, text.find('\n')) == "scenario,sensor,cycle,recon_loss,epistemic,aleatoric");
  const auto rows = read_metrics_csv(dir / "m.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].scenario == "healthy");
  CHECK(rows[0].metrics.epistemic == 1.0 / 3.0);
  CHECK(rows[0].metrics.aleatoric == 2e-9);
  CHECK(rows[1].cycle == 1);
  CHECK(rows[2].sensor == "PS1");
  CHECK(rows[2].metrics.epistemic == 1e300);

  results[0].label = "bogus";
  CHECK_THROWS_AS(export_metrics_csv(results, dir / "bad.csv"), ConfigError);

  io::write_file_atomic(dir / "broken.csv", "scenario,sensor,cycle,recon_loss,epistemic,aleatoric\nhealthy,,0,1,2\n");
  CHECK_THROWS_AS(read_metrics_csv(dir / "broken.csv"), IngestionError);
  io::write_file_atomic(dir / "label.csv", "scenario,sensor,cycle,recon_loss,epistemic,aleatoric\nsick,,0,1,2,3\n");
  CHECK_THROWS_AS(read_metrics_csv(dir / "label.csv"), IngestionError);
  CHECK_THROWS_AS(read_metrics_csv(dir / "absent.csv"), IngestionError);
}

TEST_CASE("trace CSV") {
  test::TempDir dir("trace");
  std::vector<std::string> names;
  for (int k = 0; k < 17; ++k) names.push_back("S" + std::to_string(k));
  const Vector actual = Vector::LinSpaced(1020, 0, 1019);
  export_trace_csv(12, actual, record(1020, 0.5), names, dir / "t.csv");
  const auto text = io::read_file(dir / "t.csv");
  const auto lines = io::split(text, '\n');
  CHECK(lines[0] == "cycle,sensor,second,actual,reconstructed,epistemic_std,aleatoric_std");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1021);
  CHECK(lines[1] == "12,S0,0,0,0.5,0.5,2");
  CHECK(lines[62] == "12,S1,1,61,0.5,0.5,2");
  CHECK_THROWS_AS(export_trace_csv(0, actual, record(1019, 0.5), names, dir / "u.csv"), DimensionError);
}

TEST_CASE("report JSON") {
  const Matrix pts = test::random_matrix(20, 3, 1);
  auto r = kmeans(pts, 2, 0);
  r.purity = 0.75;
  const std::vector<std::string> groups{"healthy", "noise"};
  const auto text = cluster_report_json(r, groups);
  CHECK(text.find("\"purity\"") != std::string::npos);
  CHECK(text.find("\"centroids\"") != std::string::npos);
  CHECK(text.find("\"inertia\"") != std::string::npos);
}
