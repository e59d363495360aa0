#include "doctest.h"
#include "support.hpp"

#include "bae/drift.hpp"

#include <cmath>

using namespace bae;
using namespace bae::data;
using namespace bae::drift;

namespace {

CycleDataset two_sensor(double level_a, double level_b, Index cycles = 20) {
  CycleDataset ds;
  ds.sensors.push_back({"A", 10, Matrix::Constant(cycles, 600, level_a) + 0.5 * test::random_matrix(cycles, 600, 1)});
  ds.sensors.push_back({"B", 1, Matrix::Constant(cycles, 60, level_b) + 0.5 * test::random_matrix(cycles, 60, 2)});
  for (Index c = 0; c < cycles; ++c) ds.profile.push_back({100.0, {100.0}, true});
  return ds;
}

}  // namespace

TEST_CASE("reference mean") {
  auto ds = two_sensor(7, 1);
  ds.sensors[0].raw.setConstant(7.0);
  CHECK(sensor_reference_mean(ds, "A") == 7.0);
  CHECK(sensor_reference(ds, "A").referent == 7.0);
  CHECK_THROWS_AS(sensor_reference_mean(ds, "C"), ConfigError);

  SUBCASE("near-zero mean falls back to the std") {
    auto z = two_sensor(0, 1);
    z.sensors[0].raw.array() -= z.sensors[0].raw.mean();
    const auto ref = sensor_reference(z, "A");
    CHECK(ref.referent == doctest::Approx(ref.stddev));
    CHECK(ref.stddev > 0.1);
    CHECK(ref.warnings.size() == 1);
  }
  SUBCASE("constructed synthetic sensor") {
    SyntheticConfig c;
    c.cycles = 200;
    c.seed = 3;
    const auto syn = generate_synthetic(c, 0.0);
    // level 20 + 10k; the load-dependent lift and the waveform average out.
    for (Index k = 0; k < 6; ++k)
      CHECK(sensor_reference_mean(syn, syn.sensors[k].name) == doctest::Approx(20.0 + 10.0 * k).epsilon(0.02));
  }
}

TEST_CASE("offset injection") {
  auto ds = two_sensor(10, 3);
  ds.sensors[0].raw.setConstant(10.0);
  const DriftSpec spec{"A", DriftKind::offset, 0.1, 0};
  const auto out = inject_offset(ds, spec, sensor_reference_mean(ds, "A"));
  CHECK(((out.sensors[0].raw.array() - ds.sensors[0].raw.array()) == 1.0).all());
  CHECK((out.sensors[1].raw.array() == ds.sensors[1].raw.array()).all());

  const auto same = inject_offset(ds, {"A", DriftKind::offset, 0.0, 0}, 10.0);
  CHECK((same.sensors[0].raw.array() == ds.sensors[0].raw.array()).all());
  CHECK(spec.label() == "offset_10");
}

TEST_CASE("offset commutes with scaling") {
  const auto ds = two_sensor(12, 3);
  const auto scaler = fit_scaler(resample(ds));
  const auto ref = sensor_reference(ds, "A");
  const DriftSpec spec{"A", DriftKind::offset, 0.25, 0};
  const Matrix before = features(ds, scaler);
  const Matrix after = features(inject(ds, spec, ref), scaler);
  const double shift = 0.25 * ref.mean / scaler.stddev[0];
  double worst = 0;
  for (Index r = 0; r < before.rows(); ++r)
    for (Index c = 0; c < before.cols(); ++c) {
      const double expected = before(r, c) + (c < 60 ? shift : 0.0);
      worst = std::max(worst, std::abs(after(r, c) - expected));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("noise injection") {
  const auto ds = two_sensor(8, 3, 40);
  const double mu = sensor_reference_mean(ds, "A");
  const DriftSpec spec{"A", DriftKind::noise, 0.25, 77};
  const auto out = inject_noise(ds, spec, mu);
  const Matrix delta = out.sensors[0].raw - ds.sensors[0].raw;
  const double bound = 0.25 * std::abs(mu);
  CHECK(delta.cwiseAbs().maxCoeff() <= bound);
  CHECK(delta.cwiseAbs().maxCoeff() > 0.9 * bound);
  // Uniform(-b, b) has std b / sqrt(3).
  const double se = bound / std::sqrt(3.0) / std::sqrt(static_cast<double>(delta.size()));
  CHECK(std::abs(delta.mean()) < 3 * se);
  CHECK((out.sensors[1].raw.array() == ds.sensors[1].raw.array()).all());

  const auto again = inject_noise(ds, spec, mu);
  CHECK((again.sensors[0].raw.array() == out.sensors[0].raw.array()).all());
  const auto other = inject_noise(ds, {"A", DriftKind::noise, 0.25, 78}, mu);
  CHECK_FALSE((other.sensors[0].raw.array() == out.sensors[0].raw.array()).all());
  CHECK(spec.label() == "noise_25");
}

TEST_CASE("invalid drift specs") {
  const auto ds = two_sensor(8, 3);
  CHECK_THROWS_AS((DriftSpec{"A", DriftKind::noise, -0.1, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((DriftSpec{"A", DriftKind::noise, std::nan(""), 0}.validate()), ConfigError);
  CHECK_THROWS_AS((DriftSpec{"", DriftKind::noise, 0.1, 0}.validate()), ConfigError);
  CHECK_THROWS_AS(inject(ds, {"Z", DriftKind::offset, 0.1, 0}, SensorReference{1, 1, 1, {}}), ConfigError);
  CHECK_THROWS_AS(inject_offset(ds, {"A", DriftKind::noise, 0.1, 0}, 1.0), ConfigError);
  CHECK_THROWS_AS(parse_kind("spike"), ConfigError);
  CHECK(parse_kind("offset") == DriftKind::offset);
}
