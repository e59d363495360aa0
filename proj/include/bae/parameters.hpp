#ifndef BAE_PARAMETERS_HPP
#define BAE_PARAMETERS_HPP

#include "bae/errors.hpp"
#include "bae/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bae {

enum class Activation { relu, leaky_relu, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Autoencoder topology. `widths` runs input -> hidden... -> output; the last
/// hidden layer feeds two linear heads of width D: reconstruction mean and
/// log-variance.
struct NetworkSpec {
  std::vector<Index> widths;
  Activation activation = Activation::leaky_relu;
  double leaky_slope = 0.01;

  Index input_dim() const { return widths.empty() ? 0 : widths.front(); }
  /// Trunk layers (with activation) followed by the two heads.
  Index layer_count() const { return static_cast<Index>(widths.size()); }
  Index trunk_layers() const { return static_cast<Index>(widths.size()) - 2; }
  Index mean_head() const { return trunk_layers(); }
  Index log_var_head() const { return trunk_layers() + 1; }
  /// Trunk layer whose output is the narrowest (the latent code).
  Index bottleneck_layer() const;

  Index fan_in(Index layer) const;
  Index fan_out(Index layer) const;

  /// Throws ConfigError when the topology is unusable.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// All weights and biases of one network, stored contiguously so that
/// optimizers, regularizers and serialization work on a single flat vector.
/// Layer l owns a row-major (fan_out x fan_in) weight block followed by a
/// fan_out bias block.
template <typename Scalar>
class BasicParameterSet {
 public:
  using WeightMap = Eigen::Map<MatrixX<Scalar>>;
  using ConstWeightMap = Eigen::Map<const MatrixX<Scalar>>;
  using BiasMap = Eigen::Map<VectorX<Scalar>>;
  using ConstBiasMap = Eigen::Map<const VectorX<Scalar>>;

  BasicParameterSet() = default;

  /// Zero-filled parameters for `spec`.
  explicit BasicParameterSet(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    offsets_.reserve(spec_.layer_count() + 1);
    Index offset = 0;
    for (Index l = 0; l < spec_.layer_count(); ++l) {
      offsets_.push_back(offset);
      offset += spec_.fan_out(l) * (spec_.fan_in(l) + 1);
    }
    offsets_.push_back(offset);
    values_ = VectorX<Scalar>::Zero(offset);
  }

  /// Rebuilds a parameter set from its flattened form.
  static BasicParameterSet unflatten(const NetworkSpec& spec, const VectorX<Scalar>& flat) {
    BasicParameterSet p(spec);
    if (flat.size() != p.total_count())
      throw DimensionError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                           std::to_string(p.total_count()));
    p.values_ = flat;
    return p;
  }

  const NetworkSpec& spec() const { return spec_; }
  Index layer_count() const { return spec_.layer_count(); }
  Index total_count() const { return values_.size(); }

  const VectorX<Scalar>& flat() const { return values_; }
  VectorX<Scalar>& flat() { return values_; }

  WeightMap weights(Index l) { return WeightMap(values_.data() + offsets_[l], spec_.fan_out(l), spec_.fan_in(l)); }
  ConstWeightMap weights(Index l) const {
    return ConstWeightMap(values_.data() + offsets_[l], spec_.fan_out(l), spec_.fan_in(l));
  }
  BiasMap bias(Index l) { return BiasMap(values_.data() + bias_offset(l), spec_.fan_out(l)); }
  ConstBiasMap bias(Index l) const { return ConstBiasMap(values_.data() + bias_offset(l), spec_.fan_out(l)); }

  /// Same layout, all zeros.
  BasicParameterSet zeros_like() const {
    BasicParameterSet p = *this;
    p.values_.setZero();
    return p;
  }

  bool same_shape(const BasicParameterSet& other) const { return spec_ == other.spec_; }

  template <typename Other>
  BasicParameterSet<Other> cast() const {
    BasicParameterSet<Other> p(spec_);
    p.flat() = values_.template cast<Other>();
    return p;
  }

  bool operator==(const BasicParameterSet& other) const {
    return spec_ == other.spec_ && values_.size() == other.values_.size() &&
           (values_.array() == other.values_.array()).all();
  }

 private:
  Index bias_offset(Index l) const { return offsets_[l] + spec_.fan_out(l) * spec_.fan_in(l); }

  NetworkSpec spec_;
  std::vector<Index> offsets_;
  VectorX<Scalar> values_;
};

using ParameterSet = BasicParameterSet<double>;

/// He-style Gaussian draws: every weight ~ N(0, scale^2 * 2 / fan_in).
/// Biases are drawn with the same per-layer std when `include_biases`, else zero.
template <typename Scalar>
BasicParameterSet<Scalar> draw_gaussian_params(const NetworkSpec& spec, std::mt19937_64& engine, double scale,
                                               bool include_biases) {
  BasicParameterSet<Scalar> p(spec);
  for (Index l = 0; l < spec.layer_count(); ++l) {
    const double std_dev = scale * std::sqrt(2.0 / static_cast<double>(spec.fan_in(l)));
    if (std_dev == 0.0) continue;
    std::normal_distribution<double> normal(0.0, std_dev);
    auto w = p.weights(l);
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<Scalar>(normal(engine));
    if (include_biases) {
      auto b = p.bias(l);
      for (Index i = 0; i < b.size(); ++i) b(i) = static_cast<Scalar>(normal(engine));
    }
  }
  return p;
}

/// Network initialization: He-normal weights, zero biases; deterministic in `seed`.
template <typename Scalar = double>
BasicParameterSet<Scalar> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto engine = make_engine(seed, streams::init);
  return draw_gaussian_params<Scalar>(spec, engine, 1.0, false);
}

/// FNV-1a over the raw bytes of the parameter values. Used to check that
/// something was left untouched.
std::uint64_t fingerprint(const ParameterSet& p);

}  // namespace bae

#endif  // BAE_PARAMETERS_HPP
