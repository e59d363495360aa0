#include "bae/drift.hpp"

#include <cmath>
#include <random>

namespace bae::drift {

std::string_view to_string(DriftKind kind) { return kind == DriftKind::noise ? "noise" : "offset"; }

DriftKind parse_kind(std::string_view name) {
  if (name == "noise") return DriftKind::noise;
  if (name == "offset") return DriftKind::offset;
  throw ConfigError("unknown drift kind '" + std::string(name) + "' (expected noise or offset)");
}

void DriftSpec::validate() const {
  if (sensor.empty()) throw ConfigError("drift spec needs a sensor");
  if (!(level >= 0.0) || !std::isfinite(level)) throw ConfigError("drift level must be a finite non-negative fraction");
}

std::string DriftSpec::label() const {
  return std::string(to_string(kind)) + "_" + std::to_string(static_cast<long long>(std::llround(level * 100.0)));
}

double sensor_reference_mean(const data::CycleDataset& train, std::string_view sensor) {
  const Index k = train.sensor_index(sensor);
  const Matrix& raw = train.sensors[k].raw;
  if (raw.size() == 0) throw ConfigError("sensor_reference_mean: no training cycles");
  double sum = 0;
  for (Index r = 0; r < raw.rows(); ++r)
    for (Index c = 0; c < raw.cols(); ++c) sum += raw(r, c);
  return sum / static_cast<double>(raw.size());
}

SensorReference sensor_reference(const data::CycleDataset& train, std::string_view sensor) {
  SensorReference ref;
  ref.mean = sensor_reference_mean(train, sensor);
  const Matrix& raw = train.sensors[train.sensor_index(sensor)].raw;
  double sq = 0;
  for (Index r = 0; r < raw.rows(); ++r)
    for (Index c = 0; c < raw.cols(); ++c) sq += (raw(r, c) - ref.mean) * (raw(r, c) - ref.mean);
  ref.stddev = std::sqrt(sq / static_cast<double>(raw.size()));
  ref.referent = ref.mean;
  if (std::abs(ref.mean) < kMeanFloor) {
    ref.referent = ref.stddev;
    ref.warnings.push_back("sensor " + std::string(sensor) +
                           " has a near-zero training mean; drift amplitude uses its training std instead");
  }
  return ref;
}

data::CycleDataset inject_offset(const data::CycleDataset& cycles, const DriftSpec& spec, double referent) {
  spec.validate();
  if (spec.kind != DriftKind::offset) throw ConfigError("inject_offset called with a noise spec");
  data::CycleDataset out = cycles;
  const Index k = out.sensor_index(spec.sensor);
  out.sensors[k].raw.array() += spec.level * referent;
  return out;
}

data::CycleDataset inject_noise(const data::CycleDataset& cycles, const DriftSpec& spec, double referent) {
  spec.validate();
  if (spec.kind != DriftKind::noise) throw ConfigError("inject_noise called with an offset spec");
  data::CycleDataset out = cycles;
  const Index k = out.sensor_index(spec.sensor);
  const double half_width = spec.level * std::abs(referent);
  if (half_width == 0.0) return out;
  auto engine = make_engine(spec.seed, streams::noise);
  std::uniform_real_distribution<double> uniform(-half_width, half_width);
  Matrix& raw = out.sensors[k].raw;
  for (Index r = 0; r < raw.rows(); ++r)
    for (Index c = 0; c < raw.cols(); ++c) raw(r, c) += uniform(engine);
  return out;
}

data::CycleDataset inject(const data::CycleDataset& cycles, const DriftSpec& spec, const SensorReference& ref) {
  return spec.kind == DriftKind::offset ? inject_offset(cycles, spec, ref.referent)
                                        : inject_noise(cycles, spec, ref.referent);
}

}  // namespace bae::drift
