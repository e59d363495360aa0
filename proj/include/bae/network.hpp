#ifndef BAE_NETWORK_HPP
#define BAE_NETWORK_HPP

#include "bae/errors.hpp"
#include "bae/linalg.hpp"
#include "bae/losses.hpp"
#include "bae/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace bae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

template <typename Scalar>
struct ForwardOutput {
  MatrixX<Scalar> mean;
  MatrixX<Scalar> log_var;
  MatrixX<Scalar> latent;
};

template <typename Scalar>
struct Gradient {
  LossTerms<Scalar> terms;
  BasicParameterSet<Scalar> grads;
  Scalar loss() const { return terms.total(); }
};

namespace detail {

template <typename Scalar>
Scalar activate(Activation a, Scalar slope, Scalar z) {
  switch (a) {
    case Activation::relu:
      return z > 0 ? z : Scalar(0);
    case Activation::leaky_relu:
      return z > 0 ? z : slope * z;
    case Activation::tanh:
      return std::tanh(z);
  }
  return z;
}

template <typename Scalar>
Scalar activate_derivative(Activation a, Scalar slope, Scalar z) {
  switch (a) {
    case Activation::relu:
      return z > 0 ? Scalar(1) : Scalar(0);
    case Activation::leaky_relu:
      return z > 0 ? Scalar(1) : slope;
    case Activation::tanh: {
      const Scalar t = std::tanh(z);
      return Scalar(1) - t * t;
    }
  }
  return Scalar(1);
}

/// Pre-activations and activations of every trunk layer, plus head outputs.
template <typename Scalar>
struct ForwardTape {
  std::vector<MatrixX<Scalar>> pre;   // z_l = a_{l-1} W_l^T + b_l
  std::vector<MatrixX<Scalar>> post;  // a_l = act(z_l)
  MatrixX<Scalar> mean;
  MatrixX<Scalar> log_var_raw;
  MatrixX<Scalar> log_var;
};

template <typename Scalar, typename DX>
ForwardTape<Scalar> forward_tape(const BasicParameterSet<Scalar>& params, const Eigen::MatrixBase<DX>& x) {
  const NetworkSpec& spec = params.spec();
  if (x.cols() != spec.input_dim())
    throw DimensionError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(spec.input_dim()));
  const Scalar slope = static_cast<Scalar>(spec.leaky_slope);
  ForwardTape<Scalar> tape;
  tape.pre.reserve(spec.trunk_layers());
  tape.post.reserve(spec.trunk_layers());
  MatrixX<Scalar> input = x;
  for (Index l = 0; l < spec.trunk_layers(); ++l) {
    const MatrixX<Scalar>& a = l == 0 ? input : tape.post.back();
    MatrixX<Scalar> z = a * params.weights(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    MatrixX<Scalar> h = z.unaryExpr([&](Scalar v) { return activate(spec.activation, slope, v); });
    tape.pre.push_back(std::move(z));
    tape.post.push_back(std::move(h));
  }
  const MatrixX<Scalar>& last = tape.post.back();
  tape.mean = last * params.weights(spec.mean_head()).transpose();
  tape.mean.rowwise() += params.bias(spec.mean_head()).transpose();
  tape.log_var_raw = last * params.weights(spec.log_var_head()).transpose();
  tape.log_var_raw.rowwise() += params.bias(spec.log_var_head()).transpose();
  tape.log_var = tape.log_var_raw.unaryExpr(
      [](Scalar v) { return std::clamp(v, static_cast<Scalar>(kLogVarMin), static_cast<Scalar>(kLogVarMax)); });
  return tape;
}

}  // namespace detail

/// Runs a batch (one sample per row) through the autoencoder.
/// The log-variance head is clamped to [kLogVarMin, kLogVarMax].
template <typename Scalar, typename DX>
ForwardOutput<Scalar> forward(const BasicParameterSet<Scalar>& params, const Eigen::MatrixBase<DX>& x) {
  auto tape = detail::forward_tape(params, x);
  ForwardOutput<Scalar> out;
  out.latent = std::move(tape.post[params.spec().bottleneck_layer()]);
  out.mean = std::move(tape.mean);
  out.log_var = std::move(tape.log_var);
  return out;
}

/// Loss and exact reverse-mode gradient for one batch. The reconstruction
/// target is the input itself.
template <typename Scalar, typename DX>
Gradient<Scalar> backward(const BasicParameterSet<Scalar>& params, const Eigen::MatrixBase<DX>& x,
                          const BasicLossSpec<Scalar>& loss) {
  const NetworkSpec& spec = params.spec();
  const auto tape = detail::forward_tape(params, x);
  const MatrixX<Scalar> target = x;

  Gradient<Scalar> out{loss_terms(target, tape.mean, tape.log_var, params, loss), params.zeros_like()};
  auto& g = out.grads;
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(x.rows());
  const Scalar lo = static_cast<Scalar>(kLogVarMin);
  const Scalar hi = static_cast<Scalar>(kLogVarMax);

  // Head deltas.
  const auto resid = (target - tape.mean).array();
  const auto inv_var = (-tape.log_var.array()).exp();
  const MatrixX<Scalar> d_mean = (-(resid * inv_var) * inv_batch).matrix();
  MatrixX<Scalar> d_log_var = ((Scalar(1) - resid.square() * inv_var) * (inv_batch / Scalar(2))).matrix();
  for (Index i = 0; i < d_log_var.rows(); ++i)
    for (Index j = 0; j < d_log_var.cols(); ++j)
      if (tape.log_var_raw(i, j) < lo || tape.log_var_raw(i, j) > hi) d_log_var(i, j) = 0;

  const MatrixX<Scalar>& last = tape.post.back();
  g.weights(spec.mean_head()).noalias() = d_mean.transpose() * last;
  g.bias(spec.mean_head()) = d_mean.colwise().sum().transpose();
  g.weights(spec.log_var_head()).noalias() = d_log_var.transpose() * last;
  g.bias(spec.log_var_head()) = d_log_var.colwise().sum().transpose();

  MatrixX<Scalar> d_h = d_mean * params.weights(spec.mean_head());
  d_h.noalias() += d_log_var * params.weights(spec.log_var_head());

  const Scalar slope = static_cast<Scalar>(spec.leaky_slope);
  for (Index l = spec.trunk_layers() - 1; l >= 0; --l) {
    const MatrixX<Scalar> d_z =
        d_h.cwiseProduct(tape.pre[l].unaryExpr([&](Scalar z) { return detail::activate_derivative(spec.activation, slope, z); }));
    if (l == 0) {
      g.weights(l).noalias() = d_z.transpose() * target;
    } else {
      g.weights(l).noalias() = d_z.transpose() * tape.post[l - 1];
      d_h = d_z * params.weights(l);
    }
    g.bias(l) = d_z.colwise().sum().transpose();
  }

  if (loss.anchor) {
    const Scalar scale = Scalar(2) * loss.lambda / static_cast<Scalar>(loss.n_train);
    g.flat() += scale * (params.flat() - loss.anchor->flat());
  }
  if (!g.flat().allFinite()) throw NumericError("gradient", "backward: gradient is not finite");
  return out;
}

}  // namespace bae

#endif  // BAE_NETWORK_HPP
