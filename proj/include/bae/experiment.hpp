#ifndef BAE_EXPERIMENT_HPP
#define BAE_EXPERIMENT_HPP

#include "bae/dataset.hpp"
#include "bae/drift.hpp"
#include "bae/ensemble.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace bae {

/// One sensor swept over drift kinds and levels.
struct DriftSweep {
  std::string sensor;
  std::vector<drift::DriftKind> kinds;
  std::vector<double> levels;
};

struct DataSource {
  enum class Kind { directory, synthetic };
  Kind kind = Kind::synthetic;
  std::filesystem::path path;  // directory source
  data::SyntheticConfig synthetic;
  Index degraded_cycles = 100;                 // synthetic: cycles per degraded cooler grade
  std::vector<double> degraded_coolers{20, 3};  // synthetic: cooler grades to generate
};

/// Everything one experiment run needs. Parsed from a JSON document whose
/// keys are checked strictly (unknown keys are errors).
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "runs/default";
  DataSource data;
  std::vector<Index> hidden{500, 250, 3, 250, 500};
  Activation activation = Activation::leaky_relu;
  double leaky_slope = 0.01;
  TrainConfig train;  // network is filled in once the input width is known
  double split_ratio = 0.7;
  std::vector<double> real_drift{20, 3};
  std::vector<DriftSweep> drifts;
  ReconstructionMode reconstruction = ReconstructionMode::ensemble_mean;
  int cluster_k = 4;

  /// Autoencoder topology for `input_dim` features.
  NetworkSpec network(Index input_dim) const;
  /// Applies the seed to every seeded component.
  void set_seed(std::uint64_t s);
};

ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Loads the directory dataset, or builds the synthetic one (healthy cycles
/// followed by one block per degraded cooler grade).
data::CycleDataset load_experiment_data(const ExperimentConfig& config, int jobs = 1);

/// Seed for the noise draws of the i-th injected scenario.
std::uint64_t drift_seed(std::uint64_t seed, Index scenario);

}  // namespace bae

#endif  // BAE_EXPERIMENT_HPP
