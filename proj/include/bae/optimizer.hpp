#ifndef BAE_OPTIMIZER_HPP
#define BAE_OPTIMIZER_HPP

#include "bae/errors.hpp"
#include "bae/parameters.hpp"

#include <cmath>
#include <cstdint>

namespace bae {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators for every parameter.
template <typename Scalar>
struct AdamState {
  AdamSettings settings;
  VectorX<Scalar> first_moment;
  VectorX<Scalar> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const BasicParameterSet<Scalar>& params, AdamSettings s)
      : settings(s),
        first_moment(VectorX<Scalar>::Zero(params.total_count())),
        second_moment(VectorX<Scalar>::Zero(params.total_count())) {}
};

/// One bias-corrected Adam update, applied in place.
template <typename Scalar>
void adam_step(BasicParameterSet<Scalar>& params, const BasicParameterSet<Scalar>& grads, AdamState<Scalar>& state) {
  if (!params.same_shape(grads) || state.first_moment.size() != params.total_count() ||
      state.second_moment.size() != params.total_count())
    throw DimensionError("adam_step: parameter, gradient and optimizer shapes disagree");
  const Scalar b1 = static_cast<Scalar>(state.settings.beta1);
  const Scalar b2 = static_cast<Scalar>(state.settings.beta2);
  const Scalar lr = static_cast<Scalar>(state.settings.learning_rate);
  const Scalar eps = static_cast<Scalar>(state.settings.epsilon);

  ++state.step;
  const auto& g = grads.flat().array();
  state.first_moment.array() = b1 * state.first_moment.array() + (Scalar(1) - b1) * g;
  state.second_moment.array() = b2 * state.second_moment.array() + (Scalar(1) - b2) * g.square();
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  params.flat().array() -=
      lr * (state.first_moment.array() / c1) / ((state.second_moment.array() / c2).sqrt() + eps);
}

}  // namespace bae

#endif  // BAE_OPTIMIZER_HPP
