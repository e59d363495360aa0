#ifndef BAE_LOSSES_HPP
#define BAE_LOSSES_HPP

#include "bae/errors.hpp"
#include "bae/linalg.hpp"
#include "bae/parameters.hpp"

#include <cmath>
#include <string>

namespace bae {

namespace detail {

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace detail

/// Heteroscedastic Gaussian negative log-likelihood (constant dropped):
///   (1/B) sum_i sum_d [ (x_id - mean_id)^2 / (2 exp(s_id)) + s_id / 2 ]
/// where s is the predicted log-variance.
template <typename DX, typename DM, typename DS>
typename DX::Scalar nll_loss(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& mean,
                             const Eigen::MatrixBase<DS>& log_var) {
  using Scalar = typename DX::Scalar;
  detail::require_same_shape(x, mean, "nll_loss");
  detail::require_same_shape(x, log_var, "nll_loss");
  if (x.rows() == 0) throw DimensionError("nll_loss: empty batch");
  Scalar total = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index d = 0; d < x.cols(); ++d) {
      const Scalar r = x(i, d) - mean(i, d);
      total += r * r * std::exp(-log_var(i, d)) / Scalar(2) + log_var(i, d) / Scalar(2);
    }
  }
  const Scalar loss = total / static_cast<Scalar>(x.rows());
  if (!std::isfinite(static_cast<double>(loss))) throw NumericError("nll", "nll_loss is not finite");
  return loss;
}

/// Anchor regularizer: (lambda / N) * ||theta - theta_anchor||^2.
template <typename Scalar>
Scalar anchor_loss(const BasicParameterSet<Scalar>& params, const BasicParameterSet<Scalar>& anchor, Scalar lambda,
                   Index n_train) {
  if (n_train < 1) throw ConfigError("anchor_loss: N must be at least 1");
  if (!params.same_shape(anchor)) throw DimensionError("anchor_loss: anchor shape differs from parameters");
  Scalar sq = 0;
  const auto& a = params.flat();
  const auto& b = anchor.flat();
  for (Index k = 0; k < a.size(); ++k) {
    const Scalar diff = a(k) - b(k);
    sq += diff * diff;
  }
  const Scalar loss = lambda / static_cast<Scalar>(n_train) * sq;
  if (!std::isfinite(static_cast<double>(loss))) throw NumericError("anchor", "anchor_loss is not finite");
  return loss;
}

/// Describes the objective minimised by one ensemble member. Without an
/// anchor only the likelihood term is used.
template <typename Scalar>
struct BasicLossSpec {
  const BasicParameterSet<Scalar>* anchor = nullptr;
  Scalar lambda = 0;
  Index n_train = 1;
};

using LossSpec = BasicLossSpec<double>;

template <typename Scalar>
struct LossTerms {
  Scalar nll = 0;
  Scalar anchor = 0;
  Scalar total() const { return nll + anchor; }
};

/// Likelihood plus anchor prior for a batch whose forward outputs are given.
template <typename DX, typename DM, typename DS, typename Scalar = typename DX::Scalar>
LossTerms<Scalar> loss_terms(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& mean,
                             const Eigen::MatrixBase<DS>& log_var, const BasicParameterSet<Scalar>& params,
                             const BasicLossSpec<Scalar>& spec) {
  LossTerms<Scalar> terms;
  terms.nll = nll_loss(x, mean, log_var);
  if (spec.anchor) terms.anchor = anchor_loss(params, *spec.anchor, spec.lambda, spec.n_train);
  return terms;
}

template <typename DX, typename DM, typename DS, typename Scalar = typename DX::Scalar>
Scalar total_loss(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& mean,
                  const Eigen::MatrixBase<DS>& log_var, const BasicParameterSet<Scalar>& params,
                  const BasicParameterSet<Scalar>& anchor, Scalar lambda, Index n_train) {
  return loss_terms(x, mean, log_var, params, BasicLossSpec<Scalar>{&anchor, lambda, n_train}).total();
}

}  // namespace bae

#endif  // BAE_LOSSES_HPP
