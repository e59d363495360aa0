#ifndef BAE_ENSEMBLE_HPP
#define BAE_ENSEMBLE_HPP

#include "bae/dataset.hpp"
#include "bae/linalg.hpp"
#include "bae/network.hpp"
#include "bae/optimizer.hpp"
#include "bae/parameters.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bae {

struct TrainConfig {
  NetworkSpec network;
  Index members = 10;
  double lambda = 0.01;
  Index epochs = 150;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double anchor_std_scale = 1.0;

  void validate() const;
};

/// Fixed anchor draws, one per ensemble member. Anchors are never touched by
/// training.
struct AnchorSet {
  std::vector<ParameterSet> members;
  double prior_mean = 0.0;
  std::vector<double> prior_std;  // per layer

  Index size() const { return static_cast<Index>(members.size()); }
};

/// Seed used for member j's initialization and minibatch order.
std::uint64_t member_seed(std::uint64_t seed, Index member);

/// Per-layer anchor prior std: anchor_std_scale * sqrt(2 / fan_in).
std::vector<double> anchor_prior_std(const NetworkSpec& spec, double anchor_std_scale);

/// Anchor for a single member; identical to sample_anchors(...).members[member].
ParameterSet sample_member_anchor(const NetworkSpec& spec, double anchor_std_scale, std::uint64_t seed, Index member);
AnchorSet sample_anchors(const NetworkSpec& spec, const TrainConfig& config, std::uint64_t seed);

struct TrainedMember {
  ParameterSet params;
  std::uint64_t seed = 0;
  double initial_loss = 0;              // full training set, before the first step
  double final_loss = 0;                // full training set, after the last step
  std::vector<double> epoch_loss;       // mean minibatch loss per epoch
};

/// Full-batch total loss (likelihood + anchor prior) of `params` on `train`.
double training_loss(const ParameterSet& params, const Matrix& train, const ParameterSet& anchor, double lambda);

/// Minimises the anchored objective for one member with minibatch Adam.
/// Throws TrainingError naming the step and term when a loss goes non-finite.
TrainedMember train_member(const Matrix& train, const TrainConfig& config, Index member_index);
TrainedMember train_member(const Matrix& train, const TrainConfig& config, Index member_index, const ParameterSet& anchor);

struct TrainingMetadata {
  std::vector<std::uint64_t> member_seeds;
  Index n_train = 0;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
  std::vector<double> initial_loss;
  std::vector<double> final_loss;
  std::vector<std::vector<double>> loss_traces;
};

struct EnsembleModel {
  NetworkSpec spec;
  std::vector<ParameterSet> members;
  AnchorSet anchors;
  TrainConfig config;
  data::ScalerParams scaler;
  std::vector<data::SensorSpec> sensors;
  TrainingMetadata metadata;

  Index size() const { return static_cast<Index>(members.size()); }
  Index input_dim() const { return spec.input_dim(); }
  void validate() const;
};

/// Trains config.members members. With jobs > 1 members train on separate
/// threads; the result does not depend on the thread count.
EnsembleModel train_ensemble(const Matrix& train, const TrainConfig& config, int jobs = 1);

/// Builds a model around already trained members (e.g. for tests).
EnsembleModel make_model(const NetworkSpec& spec, std::vector<ParameterSet> members);

enum class ReconstructionMode {
  ensemble_mean,  // squared error of the ensemble-mean reconstruction
  member_mean,    // mean of the per-member squared errors
};

struct PredictionRecord {
  Vector mean;        // per-feature ensemble-mean reconstruction
  Vector epistemic;   // per-feature variance across members (divide by M)
  Vector aleatoric;   // per-feature mean of exp(log-variance) across members
  double recon_loss = 0;
  double epistemic_mean = 0;
  double aleatoric_mean = 0;
};

std::vector<PredictionRecord> predict(const EnsembleModel& model, const Matrix& x,
                                      ReconstructionMode mode = ReconstructionMode::ensemble_mean);

/// Versioned text format; see docs/model-format.md.
inline constexpr int kModelFormatVersion = 1;
void save_model(const EnsembleModel& model, const std::filesystem::path& path);
EnsembleModel load_model(const std::filesystem::path& path);
std::string serialize_model(const EnsembleModel& model);
EnsembleModel parse_model(std::string_view text);

}  // namespace bae

#endif  // BAE_ENSEMBLE_HPP
