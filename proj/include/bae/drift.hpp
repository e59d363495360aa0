#ifndef BAE_DRIFT_HPP
#define BAE_DRIFT_HPP

#include "bae/dataset.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bae::drift {

enum class DriftKind { noise, offset };

std::string_view to_string(DriftKind kind);
DriftKind parse_kind(std::string_view name);

/// Single-sensor perturbation of the raw signal.
struct DriftSpec {
  std::string sensor;
  DriftKind kind = DriftKind::offset;
  double level = 0.0;  // fraction of the sensor's training mean
  std::uint64_t seed = 0;

  void validate() const;
  /// "noise_25", "offset_5", ...: the level as a whole percent.
  std::string label() const;
};

inline constexpr double kMeanFloor = 1e-9;

/// Amplitude referent for a sensor, taken from training cycles only.
struct SensorReference {
  double mean = 0.0;
  double stddev = 0.0;
  double referent = 0.0;  // mean, or stddev when |mean| < kMeanFloor
  std::vector<std::string> warnings;
};

/// Arithmetic mean of every raw sample of `sensor` over the given cycles.
double sensor_reference_mean(const data::CycleDataset& train, std::string_view sensor);
SensorReference sensor_reference(const data::CycleDataset& train, std::string_view sensor);

/// Adds level * referent to every raw sample of the target sensor.
data::CycleDataset inject_offset(const data::CycleDataset& cycles, const DriftSpec& spec, double referent);
/// Adds Uniform(-level * |referent|, +level * |referent|) noise, one draw per raw sample.
data::CycleDataset inject_noise(const data::CycleDataset& cycles, const DriftSpec& spec, double referent);
data::CycleDataset inject(const data::CycleDataset& cycles, const DriftSpec& spec, const SensorReference& ref);

}  // namespace bae::drift

#endif  // BAE_DRIFT_HPP
