#pragma once

// Conventional covariance Kalman filter and its directly differentiated
// extension. This is the textbook recursion on full covariance matrices:
//
//   R_e = R + H·P·H^T
//   K_p = F·P·H^T·R_e^{-1}
//   x̂₊ = F·x̂ + K_p·(z - H·x̂)
//   P₊  = F·P·F^T + G·Q·G^T - K_p·R_e·K_p^T      (symmetrized)
//
// It deliberately carries none of the factored-form safeguards: R_e is
// Cholesky-factorized as-is, differences of covariances are formed
// explicitly, and the only concession to roundoff is per-step
// symmetrization. Its numerical behavior on ill-conditioned problems is the
// baseline the factored filter is measured against.

#include "udkf/core.hpp"
#include "udkf/sensitivity.hpp"
#include "udkf/ud_filter.hpp"

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace udkf {

// Conventional filter state: prediction, covariance and (when used with the
// differentiated recursion) their per-parameter derivatives.
template <typename Scalar>
struct ConvFilterState {
  Index k = 0;
  DenseVector<Scalar> x;
  DenseMatrix<Scalar> p;
  std::vector<DenseVector<Scalar>> x_prime;
  std::vector<DenseMatrix<Scalar>> p_prime;
};

// Per-step byproducts of the conventional recursion.
template <typename Scalar>
struct ConvStepOutput {
  DenseVector<Scalar> innovation;
  DenseMatrix<Scalar> innov_cov;                    // R_e
  std::vector<DenseVector<Scalar>> innovation_prime; // per parameter (differentiated runs)
  std::vector<DenseMatrix<Scalar>> innov_cov_prime;
};

template <typename Scalar>
ConvFilterState<Scalar> initialConvState(const SystemMatrices<Scalar>& model,
                                         int param_count = 0) {
  ConvFilterState<Scalar> state;
  state.k = 0;
  state.x = DenseVector<Scalar>::Zero(model.stateDim());
  state.p = model.pi0;
  state.x_prime.assign(static_cast<std::size_t>(param_count),
                       DenseVector<Scalar>::Zero(model.stateDim()));
  state.p_prime.assign(static_cast<std::size_t>(param_count),
                       DenseMatrix<Scalar>::Zero(model.stateDim(), model.stateDim()));
  return state;
}

namespace detail {

template <typename Scalar>
Eigen::LLT<DenseMatrix<Scalar>> factorInnovCov(const DenseMatrix<Scalar>& innov_cov) {
  Eigen::LLT<DenseMatrix<Scalar>> llt(innov_cov);
  if (llt.info() != Eigen::Success)
    throw FilterError("ill-conditioned innovation covariance");
  return llt;
}

template <typename Scalar>
DenseMatrix<Scalar> symmetrized(const DenseMatrix<Scalar>& m) {
  return ((m + m.transpose()) / Scalar(2)).eval();
}

}  // namespace detail

// One conventional step without derivatives.
template <typename Scalar>
std::pair<ConvFilterState<Scalar>, ConvStepOutput<Scalar>> convKfStep(
    const SystemMatrices<Scalar>& model, const ConvFilterState<Scalar>& state,
    const DenseVector<Scalar>& z) {
  const Index m = model.measDim();
  detail::require(z.size() == m, "shape error: measurement dimension mismatch");

  ConvStepOutput<Scalar> out;
  const DenseMatrix<Scalar> ph_t = state.p * model.h.transpose();
  out.innov_cov = detail::symmetrized(DenseMatrix<Scalar>(model.r + model.h * ph_t));
  const auto llt = detail::factorInnovCov(out.innov_cov);

  // K_p = F·P·H^T·R_e^{-1}, computed through the Cholesky solve.
  const DenseMatrix<Scalar> gain =
      model.f * llt.solve(ph_t.transpose()).transpose();
  out.innovation = z - model.h * state.x;

  ConvFilterState<Scalar> next;
  next.k = state.k + 1;
  next.x = model.f * state.x + gain * out.innovation;
  next.p = detail::symmetrized(
      DenseMatrix<Scalar>(model.f * state.p * model.f.transpose() +
                          model.g * model.q * model.g.transpose() -
                          gain * out.innov_cov * gain.transpose()));
  return {std::move(next), std::move(out)};
}

// One conventional step with per-parameter derivatives of every recursion
// quantity, obtained by differentiating the equations above term by term.
template <typename Scalar>
std::pair<ConvFilterState<Scalar>, ConvStepOutput<Scalar>> diffKfStep(
    const SystemMatrices<Scalar>& model, const SystemDerivatives<Scalar>& deriv,
    const ConvFilterState<Scalar>& state, const DenseVector<Scalar>& z) {
  const int p = deriv.paramCount();
  detail::require(static_cast<int>(state.x_prime.size()) == p,
                  "shape error: sensitivity state parameter count mismatch");
  detail::require(z.size() == model.measDim(),
                  "shape error: measurement dimension mismatch");

  ConvStepOutput<Scalar> out;
  const DenseMatrix<Scalar> ph_t = state.p * model.h.transpose();
  out.innov_cov = detail::symmetrized(DenseMatrix<Scalar>(model.r + model.h * ph_t));
  const auto llt = detail::factorInnovCov(out.innov_cov);

  const DenseMatrix<Scalar> kbar = llt.solve(ph_t.transpose()).transpose();  // P·H^T·R_e^{-1}
  const DenseMatrix<Scalar> gain = model.f * kbar;
  out.innovation = z - model.h * state.x;

  ConvFilterState<Scalar> next;
  next.k = state.k + 1;
  next.x = model.f * state.x + gain * out.innovation;
  next.p = detail::symmetrized(
      DenseMatrix<Scalar>(model.f * state.p * model.f.transpose() +
                          model.g * model.q * model.g.transpose() -
                          gain * out.innov_cov * gain.transpose()));

  next.x_prime.resize(static_cast<std::size_t>(p));
  next.p_prime.resize(static_cast<std::size_t>(p));
  out.innovation_prime.resize(static_cast<std::size_t>(p));
  out.innov_cov_prime.resize(static_cast<std::size_t>(p));

  for (std::size_t i = 0; i < static_cast<std::size_t>(p); ++i) {
    const auto& f_p = deriv.f[i];
    const auto& g_p = deriv.g[i];
    const auto& h_p = deriv.h[i];
    const auto& q_p = deriv.q[i];
    const auto& r_p = deriv.r[i];
    const auto& pp = state.p_prime[i];
    const auto& xp = state.x_prime[i];

    const DenseMatrix<Scalar> ph_t_p =
        pp * model.h.transpose() + state.p * h_p.transpose();
    const DenseMatrix<Scalar> re_p = detail::symmetrized(
        DenseMatrix<Scalar>(r_p + h_p * ph_t + model.h * ph_t_p));
    out.innov_cov_prime[i] = re_p;

    // K_p' from the product rule, with (R_e^{-1})' = -R_e^{-1}·R_e'·R_e^{-1}.
    const DenseMatrix<Scalar> kbar_p =
        llt.solve(ph_t_p.transpose()).transpose() - kbar * llt.solve(re_p.transpose()).transpose();
    const DenseMatrix<Scalar> gain_p = f_p * kbar + model.f * kbar_p;

    out.innovation_prime[i] = -(h_p * state.x) - model.h * xp;
    next.x_prime[i] = f_p * state.x + model.f * xp + gain_p * out.innovation +
                      gain * out.innovation_prime[i];

    next.p_prime[i] = detail::symmetrized(DenseMatrix<Scalar>(
        f_p * state.p * model.f.transpose() + model.f * pp * model.f.transpose() +
        model.f * state.p * f_p.transpose() + g_p * model.q * model.g.transpose() +
        model.g * q_p * model.g.transpose() + model.g * model.q * g_p.transpose() -
        gain_p * out.innov_cov * gain.transpose() - gain * re_p * gain.transpose() -
        gain * out.innov_cov * gain_p.transpose()));
  }
  return {std::move(next), std::move(out)};
}

// Log-likelihood term of one conventional step (same Gaussian likelihood as
// the factored recursion, written with dense R_e).
template <typename Scalar>
Scalar convLoglikTerm(const ConvStepOutput<Scalar>& out) {
  using std::log;
  const Index m = out.innovation.size();
  const auto llt = detail::factorInnovCov(out.innov_cov);
  Scalar log_det = Scalar(0);
  for (Index i = 0; i < m; ++i) {
    const Scalar l = llt.matrixLLT()(i, i);
    if (!(l > Scalar(0))) throw FilterError("invalid innovation covariance");
    log_det += Scalar(2) * log(l);
  }
  const DenseVector<Scalar> solved = llt.solve(out.innovation);
  return -Scalar(m) / Scalar(2) * log(Scalar(2) * Scalar(EIGEN_PI)) -
         (log_det + out.innovation.dot(solved)) / Scalar(2);
}

// Likelihood and gradient over a whole measurement sequence via the
// differentiated conventional recursion. Errors carry the step index.
template <typename Scalar>
FilterRunResult<Scalar> runDiffKf(const SystemMatrices<Scalar>& model,
                                  const SystemDerivatives<Scalar>& deriv,
                                  const std::vector<DenseVector<Scalar>>& measurements) {
  const int p = deriv.paramCount();
  ConvFilterState<Scalar> state = initialConvState(model, p);
  for (std::size_t i = 0; i < static_cast<std::size_t>(p); ++i)
    state.p_prime[i] = deriv.pi0[i];

  FilterRunResult<Scalar> result;
  result.gradient = DenseVector<Scalar>::Zero(p);

  for (std::size_t k = 0; k < measurements.size(); ++k) {
    try {
      auto [next, out] = diffKfStep(model, deriv, state, measurements[k]);
      result.loglik += convLoglikTerm(out);

      const auto llt = detail::factorInnovCov(out.innov_cov);
      const DenseVector<Scalar> solved = llt.solve(out.innovation);
      for (int i = 0; i < p; ++i) {
        const auto& re_p = out.innov_cov_prime[static_cast<std::size_t>(i)];
        const auto& e_p = out.innovation_prime[static_cast<std::size_t>(i)];
        // ∂[ln det R_e] = tr(R_e^{-1}·R_e'), plus the quadratic-form terms.
        const Scalar trace_term = DenseMatrix<Scalar>(llt.solve(re_p)).trace();
        result.gradient(i) -=
            (trace_term + Scalar(2) * e_p.dot(solved) - solved.dot(re_p * solved)) /
            Scalar(2);
      }
      state = std::move(next);
    } catch (const EvaluationError&) {
      throw;
    } catch (const Error& e) {
      throw EvaluationError(e.what(), static_cast<Index>(k));
    }
  }

  result.final_state.k = state.k;
  result.final_state.x = state.x;
  return result;
}

// Plain filtered run without derivatives; returns the log-likelihood.
template <typename Scalar>
Scalar runConvKf(const SystemMatrices<Scalar>& model,
                 const std::vector<DenseVector<Scalar>>& measurements) {
  ConvFilterState<Scalar> state = initialConvState(model);
  Scalar loglik = Scalar(0);
  for (std::size_t k = 0; k < measurements.size(); ++k) {
    try {
      auto [next, out] = convKfStep(model, state, measurements[k]);
      loglik += convLoglikTerm(out);
      state = std::move(next);
    } catch (const EvaluationError&) {
      throw;
    } catch (const Error& e) {
      throw EvaluationError(e.what(), static_cast<Index>(k));
    }
  }
  return loglik;
}

}  // namespace udkf
