#include "bae/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace bae {

void TrainConfig::validate() const {
  network.validate();
  if (members < 1) throw ConfigError("ensemble needs at least one member");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite non-negative number");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (!(anchor_std_scale >= 0.0) || !std::isfinite(anchor_std_scale))
    throw ConfigError("anchor_std_scale must be a finite non-negative number");
}

std::uint64_t member_seed(std::uint64_t seed, Index member) {
  auto engine = make_engine(seed, streams::member_seed, static_cast<std::uint64_t>(member));
  return engine();
}

std::vector<double> anchor_prior_std(const NetworkSpec& spec, double anchor_std_scale) {
  std::vector<double> out;
  for (Index l = 0; l < spec.layer_count(); ++l)
    out.push_back(anchor_std_scale * std::sqrt(2.0 / static_cast<double>(spec.fan_in(l))));
  return out;
}

ParameterSet sample_member_anchor(const NetworkSpec& spec, double anchor_std_scale, std::uint64_t seed, Index member) {
  auto engine = make_engine(seed, streams::anchor, static_cast<std::uint64_t>(member));
  return draw_gaussian_params<double>(spec, engine, anchor_std_scale, true);
}

AnchorSet sample_anchors(const NetworkSpec& spec, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  AnchorSet set;
  set.prior_std = anchor_prior_std(spec, config.anchor_std_scale);
  for (Index j = 0; j < config.members; ++j)
    set.members.push_back(sample_member_anchor(spec, config.anchor_std_scale, seed, j));
  return set;
}

double training_loss(const ParameterSet& params, const Matrix& train, const ParameterSet& anchor, double lambda) {
  const auto out = forward(params, train);
  return total_loss(train, out.mean, out.log_var, params, anchor, lambda, train.rows());
}

namespace {

void check_training_input(const Matrix& train, const TrainConfig& config) {
  config.validate();
  if (train.cols() != config.network.input_dim())
    throw DimensionError("training data has " + std::to_string(train.cols()) + " features, network expects D = " +
                         std::to_string(config.network.input_dim()));
  if (train.rows() < config.batch_size)
    throw ConfigError("training set (" + std::to_string(train.rows()) + " rows) is smaller than the batch size (" +
                      std::to_string(config.batch_size) + ")");
}

}  // namespace

TrainedMember train_member(const Matrix& train, const TrainConfig& config, Index member_index) {
  return train_member(train, config, member_index,
                      sample_member_anchor(config.network, config.anchor_std_scale, config.seed, member_index));
}

TrainedMember train_member(const Matrix& train, const TrainConfig& config, Index member_index,
                           const ParameterSet& anchor) {
  check_training_input(train, config);
  const Index n = train.rows();

  TrainedMember result;
  result.seed = member_seed(config.seed, member_index);
  result.params = init_params(config.network, result.seed);
  ParameterSet& params = result.params;
  const LossSpec loss{&anchor, config.lambda, n};

  const auto prefix = "member " + std::to_string(member_index) + ": ";
  try {
    result.initial_loss = training_loss(params, train, anchor, config.lambda);
  } catch (const NumericError& e) {
    throw TrainingError(prefix + "initial loss, term '" + e.term + "' is not finite");
  }

  AdamState<double> state(params, AdamSettings{config.learning_rate});
  auto engine = make_engine(result.seed, streams::shuffle);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Matrix batch;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), engine);
    double epoch_sum = 0;
    Index steps = 0;
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index rows = std::min(config.batch_size, n - start);
      batch.resize(rows, train.cols());
      for (Index r = 0; r < rows; ++r) batch.row(r) = train.row(order[start + r]);
      Gradient<double> g;
      try {
        g = backward(params, batch, loss);
      } catch (const NumericError& e) {
        throw TrainingError(prefix + "epoch " + std::to_string(epoch) + " step " + std::to_string(state.step + 1) +
                            ": term '" + e.term + "' is not finite");
      }
      adam_step(params, g.grads, state);
      epoch_sum += g.loss();
      ++steps;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(steps));
  }
  try {
    result.final_loss = training_loss(params, train, anchor, config.lambda);
  } catch (const NumericError& e) {
    throw TrainingError(prefix + "final loss, term '" + e.term + "' is not finite");
  }
  return result;
}

EnsembleModel train_ensemble(const Matrix& train, const TrainConfig& config, int jobs) {
  check_training_input(train, config);
  EnsembleModel model;
  model.spec = config.network;
  model.config = config;
  model.anchors = sample_anchors(config.network, config, config.seed);

  const auto m = static_cast<std::size_t>(config.members);
  std::vector<TrainedMember> trained(m);
  std::vector<std::exception_ptr> failures(m);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < m; j = next++) {
      try {
        trained[j] = train_member(train, config, static_cast<Index>(j), model.anchors.members[j]);
      } catch (...) {
        failures[j] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(m));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t j = 0; j < m; ++j) {
    if (!failures[j]) continue;
    try {
      std::rethrow_exception(failures[j]);
    } catch (const TrainingError&) {
      throw;
    } catch (const Error& e) {
      throw TrainingError("member " + std::to_string(j) + ": " + e.what());
    }
  }

  model.metadata.n_train = train.rows();
  for (auto& t : trained) {
    model.members.push_back(std::move(t.params));
    model.metadata.member_seeds.push_back(t.seed);
    model.metadata.initial_loss.push_back(t.initial_loss);
    model.metadata.final_loss.push_back(t.final_loss);
    model.metadata.loss_traces.push_back(std::move(t.epoch_loss));
  }
  return model;
}

EnsembleModel make_model(const NetworkSpec& spec, std::vector<ParameterSet> members) {
  EnsembleModel model;
  model.spec = spec;
  model.config.network = spec;
  model.config.members = static_cast<Index>(members.size());
  model.members = std::move(members);
  for (const auto& p : model.members) model.anchors.members.push_back(p.zeros_like());
  model.anchors.prior_std = anchor_prior_std(spec, 0.0);
  model.config.anchor_std_scale = 0.0;
  model.validate();
  return model;
}

void EnsembleModel::validate() const {
  spec.validate();
  if (members.empty()) throw ConfigError("ensemble model has no members");
  for (const auto& p : members)
    if (p.spec() != spec) throw DimensionError("ensemble member does not match the model network");
  if (anchors.size() != size()) throw DimensionError("anchor count differs from member count");
  for (const auto& a : anchors.members)
    if (a.spec() != spec) throw DimensionError("anchor does not match the model network");
}

std::vector<PredictionRecord> predict(const EnsembleModel& model, const Matrix& x, ReconstructionMode mode) {
  if (model.members.empty()) throw ConfigError("predict: model has no members");
  if (x.cols() != model.input_dim())
    throw DimensionError("predict: data has " + std::to_string(x.cols()) + " features, model expects D = " +
                         std::to_string(model.input_dim()));
  constexpr Index kChunk = 256;
  const Index D = x.cols();
  const double inv_m = 1.0 / static_cast<double>(model.size());
  std::vector<PredictionRecord> records;
  records.reserve(static_cast<std::size_t>(x.rows()));

  std::vector<Matrix> means(model.members.size());
  for (Index start = 0; start < x.rows(); start += kChunk) {
    const Index rows = std::min(kChunk, x.rows() - start);
    const auto block = x.middleRows(start, rows);
    Matrix aleatoric = Matrix::Zero(rows, D);
    for (std::size_t j = 0; j < model.members.size(); ++j) {
      auto out = forward(model.members[j], block);
      aleatoric.array() += out.log_var.array().exp();
      means[j] = std::move(out.mean);
    }
    // Shifted by the first member so that agreeing members give exactly zero spread.
    Matrix shift = Matrix::Zero(rows, D);
    for (const auto& m : means) shift += m - means.front();
    const Matrix xbar = means.front() + shift * inv_m;
    aleatoric *= inv_m;
    Matrix epistemic = Matrix::Zero(rows, D);
    for (const auto& m : means) epistemic.array() += (m - xbar).array().square();
    epistemic *= inv_m;

    for (Index r = 0; r < rows; ++r) {
      PredictionRecord rec;
      rec.mean = xbar.row(r).transpose();
      rec.epistemic = epistemic.row(r).transpose();
      rec.aleatoric = aleatoric.row(r).transpose();
      if (mode == ReconstructionMode::ensemble_mean) {
        rec.recon_loss = (block.row(r) - xbar.row(r)).squaredNorm() / static_cast<double>(D);
      } else {
        double sum = 0;
        for (const auto& m : means) sum += (block.row(r) - m.row(r)).squaredNorm() / static_cast<double>(D);
        rec.recon_loss = sum * inv_m;
      }
      rec.epistemic_mean = rec.epistemic.mean();
      rec.aleatoric_mean = rec.aleatoric.mean();
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace bae
