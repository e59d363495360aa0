#ifndef BAE_DATASET_HPP
#define BAE_DATASET_HPP

#include "bae/errors.hpp"
#include "bae/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bae::data {

/// Every cycle covers this many seconds; resampled cycles have one value per second.
inline constexpr Index kCycleSeconds = 60;

struct SensorSpec {
  std::string name;
  std::string file;
  int rate = 1;  // Hz

  bool operator==(const SensorSpec&) const = default;
};

/// Describes how a dataset directory is laid out. Stored as `manifest.json`;
/// directories without one are read with the hydraulic-rig layout.
struct DatasetManifest {
  std::vector<SensorSpec> sensors;
  std::string profile_file = "profile.txt";
  int cooler_column = 0;
  int stable_column = -1;  // -1: no stability flag

  static DatasetManifest hydraulic();
  static DatasetManifest from_json_text(std::string_view text);
  std::string to_json_text() const;
};

struct ConditionRecord {
  double cooler = 100.0;        // cooler efficiency, percent
  std::vector<double> columns;  // full profile row, pass-through
  bool stable = true;
};

/// Raw readings of one sensor: cycles x (60 * rate), physical units.
struct SensorChannel {
  std::string name;
  int rate = 1;
  Matrix raw;
};

struct CycleDataset {
  std::vector<SensorChannel> sensors;
  std::vector<ConditionRecord> profile;

  Index cycles() const { return static_cast<Index>(profile.size()); }
  Index sensor_count() const { return static_cast<Index>(sensors.size()); }
  /// Throws ConfigError for unknown names.
  Index sensor_index(std::string_view name) const;
  std::vector<std::string> sensor_names() const;

  CycleDataset subset(std::span<const Index> rows) const;
  /// Checks the shape invariants; throws IngestionError.
  void validate() const;
};

CycleDataset concat(const CycleDataset& a, const CycleDataset& b);

/// Reads one tab-separated file per sensor plus the profile file.
/// `jobs` > 1 parses sensor files concurrently.
CycleDataset load_raw_dataset(const std::filesystem::path& dir, int jobs = 1);
CycleDataset load_raw_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest, int jobs = 1);

/// Writes the dataset (and its manifest) in the same layout load_raw_dataset reads.
void write_raw_dataset(const CycleDataset& dataset, const std::filesystem::path& dir);

/// Block mean over each one-second window.
Vector resample_to_1hz(std::span<const double> signal, int rate);

/// One cycles x 60 matrix per sensor.
struct SensorFrames {
  std::vector<std::string> names;
  std::vector<Matrix> frames;

  Index cycles() const { return frames.empty() ? 0 : frames.front().rows(); }
  Index sensor_count() const { return static_cast<Index>(frames.size()); }
};

SensorFrames resample(const CycleDataset& dataset);

struct ScalerParams {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::string> warnings;

  Index sensor_count() const { return static_cast<Index>(names.size()); }
};

inline constexpr double kScalerStdFloor = 1e-9;

/// Per-sensor mean and population std over every time point of every cycle.
ScalerParams fit_scaler(const SensorFrames& train);
SensorFrames apply_scaler(const ScalerParams& scaler, const SensorFrames& frames);

/// Sensor-major layout: feature 60 * k + t is sensor k at second t.
inline Index feature_index(Index sensor, Index second) { return kCycleSeconds * sensor + second; }

Vector flatten(const Matrix& cycle);
Matrix unflatten(const Vector& features, Index sensors);
/// One row per cycle, 60 * sensors columns.
Matrix to_features(const SensorFrames& frames);

/// Resample, standardize and flatten in one go.
Matrix features(const CycleDataset& dataset, const ScalerParams& scaler);

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

inline constexpr double kHealthyCooler = 100.0;

/// Seeded shuffle of the healthy cycles (cooler == 100); the first
/// floor(ratio * H) go to training. Both index lists are returned sorted.
Split split_healthy(const CycleDataset& dataset, double ratio, std::uint64_t seed);

/// Cycles whose cooler label equals `cooler`. The value must be one of the
/// labels present in the dataset.
std::vector<Index> select_condition(const CycleDataset& dataset, double cooler);
std::vector<double> cooler_labels(const CycleDataset& dataset);

/// Synthetic multi-sensor cycles for running without the real dataset.
struct SyntheticConfig {
  Index sensors = 6;
  Index cycles = 400;
  std::uint64_t seed = 0;
  Index affected_sensors = -1;   // -1: half of the sensors
  double offset_shift = 1.0;     // affected-sensor offset at d = 1, in units of the sensor amplitude
  double amplitude_shift = 0.5;  // relative amplitude growth at d = 1
  double noise_shift = 1.0;      // relative noise growth at d = 1

  Index affected() const { return affected_sensors < 0 ? sensors / 2 : affected_sensors; }
  void validate() const;
};

/// Cooler label that represents degradation level d (100 at d = 0, 3 at d = 1).
double cooler_for_degradation(double d);
double degradation_for_cooler(double cooler);

CycleDataset generate_synthetic(const SyntheticConfig& config, double degradation);

/// CSV with a header row (`<sensor>_t<second>` per column), full precision.
void export_features_csv(const Matrix& features, std::span<const std::string> sensor_names,
                         const std::filesystem::path& path);

}  // namespace bae::data

#endif  // BAE_DATASET_HPP
