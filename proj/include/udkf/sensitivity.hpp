#pragma once

// Parameter-sensitivity propagation through the UD array filter.
//
// For each scalar parameter, the pre-array derivative pair (A', D_w') is
// pushed through the orthogonalization-derivative rule to obtain the
// post-array derivatives, which split into the derivatives of the predicted
// covariance factors, the gain block and the innovation covariance factors.
// Together with the state-prediction sensitivity x̂' this yields the exact
// log-likelihood gradient as a by-product of filtering.

#include "udkf/core.hpp"
#include "udkf/matrix_core.hpp"
#include "udkf/mwgs.hpp"
#include "udkf/ud_filter.hpp"

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace udkf {

// Elementwise derivatives of the system matrices with respect to each of
// the p parameters, carried densely and in factored form (matching
// SystemMatrices).
template <typename Scalar>
struct SystemDerivatives {
  std::vector<DenseMatrix<Scalar>> f, g, h;       // p entries each
  std::vector<DenseMatrix<Scalar>> q, r, pi0;     // dense covariance derivatives
  std::vector<FactorDerivative<Scalar>> q_ud, r_ud, pi0_ud;

  int paramCount() const { return static_cast<int>(f.size()); }
};

// Per-parameter sensitivities of the filter state: x̂' and the factor
// derivatives (U_P', D_P').
template <typename Scalar>
struct SensitivityState {
  std::vector<DenseVector<Scalar>> x_prime;
  std::vector<FactorDerivative<Scalar>> p_prime;

  int paramCount() const { return static_cast<int>(x_prime.size()); }
};

// Post-array derivative blocks of one step for one parameter.
template <typename Scalar>
struct StepSensitivity {
  DenseMatrix<Scalar> u_p_prime;     // n×n strictly upper
  DenseVector<Scalar> d_p_prime;     // n
  DenseMatrix<Scalar> gain_prime;    // n×m
  DenseMatrix<Scalar> u_innov_prime; // m×m strictly upper
  DenseVector<Scalar> d_innov_prime; // m
};

template <typename Scalar>
SensitivityState<Scalar> initialSensitivityState(const SystemMatrices<Scalar>& model,
                                                 const SystemDerivatives<Scalar>& deriv) {
  SensitivityState<Scalar> sens;
  const int p = deriv.paramCount();
  sens.x_prime.assign(static_cast<std::size_t>(p),
                      DenseVector<Scalar>::Zero(model.stateDim()));
  sens.p_prime = deriv.pi0_ud;
  return sens;
}

// Blockwise product rule on the step pre-array for parameter `param`:
//   (A^T)' = [ G'·U_Q + G·U_Q'   F'·U_P + F·U_P'        0  ]
//            [        0          H'·U_P + H·U_P'      U_R' ],
//   D_w'   = diag(D_Q', D_P', D_R').
template <typename Scalar>
PreArrayDerivatives<Scalar> assemblePreArrayDerivatives(
    const SystemMatrices<Scalar>& model, const SystemDerivatives<Scalar>& deriv,
    const FilterState<Scalar>& state, const SensitivityState<Scalar>& sens,
    int param) {
  const Index n = model.stateDim(), m = model.measDim(), q = model.noiseDim();
  const auto pi = static_cast<std::size_t>(param);
  const auto& up = state.p.u.matrix();
  const auto& up_prime = sens.p_prime[pi].u_prime;

  DenseMatrix<Scalar> at_prime = DenseMatrix<Scalar>::Zero(n + m, q + n + m);
  at_prime.block(0, 0, n, q).noalias() =
      deriv.g[pi] * model.q_ud.u.matrix() + model.g * deriv.q_ud[pi].u_prime;
  at_prime.block(0, q, n, n).noalias() = deriv.f[pi] * up + model.f * up_prime;
  at_prime.block(n, q, m, n).noalias() = deriv.h[pi] * up + model.h * up_prime;
  at_prime.block(n, q + n, m, m) = deriv.r_ud[pi].u_prime;

  PreArrayDerivatives<Scalar> pre_prime;
  pre_prime.a_prime = at_prime.transpose();
  DenseVector<Scalar> w_prime(q + n + m);
  w_prime.segment(0, q) = deriv.q_ud[pi].d_prime;
  w_prime.segment(q, n) = sens.p_prime[pi].d_prime;
  w_prime.segment(q + n, m) = deriv.r_ud[pi].d_prime;
  pre_prime.d_w_prime = w_prime;
  return pre_prime;
}

// Applies the orthogonalization-derivative rule and splits the resulting
// post-array derivatives into the filter blocks.
template <typename Scalar>
StepSensitivity<Scalar> propagateStepSensitivities(
    const PreArrays<Scalar>& pre, const PreArrayDerivatives<Scalar>& pre_prime,
    const PostArrays<Scalar>& post, Index n, Index m) {
  const PostArrayDerivatives<Scalar> dpost = mwgsDerivative(pre, pre_prime, post);
  StepSensitivity<Scalar> out;
  out.u_p_prime = dpost.u_prime.block(0, 0, n, n);
  out.d_p_prime = dpost.d_prime.segment(0, n);
  out.gain_prime = dpost.u_prime.block(0, n, n, m);
  out.u_innov_prime = dpost.u_prime.block(n, n, m, m);
  out.d_innov_prime = dpost.d_prime.segment(n, m);
  return out;
}

// Innovation sensitivities: e' = -H'·x̂ - H·x̂' and, differentiating
// U_e·ē = e,  ē' = U_e^{-1}·(e' - U_e'·ē).
template <typename Scalar>
std::pair<DenseVector<Scalar>, DenseVector<Scalar>> innovationSensitivity(
    const StepOutput<Scalar>& out, const DenseMatrix<Scalar>& u_innov_prime,
    const DenseMatrix<Scalar>& h, const DenseMatrix<Scalar>& h_prime,
    const DenseVector<Scalar>& x, const DenseVector<Scalar>& x_prime) {
  DenseVector<Scalar> e_prime = -(h_prime * x) - h * x_prime;
  DenseVector<Scalar> rhs = e_prime - u_innov_prime * out.normalized_innovation;
  DenseVector<Scalar> e_bar_prime = solveUnitUpperLeft(out.u_innov, rhs);
  return {std::move(e_prime), std::move(e_bar_prime)};
}

// State-prediction sensitivity update:
//   x̂₊' = F'·x̂ + F·x̂' + (K_p·U_e)'·ē + (K_p·U_e)·ē'.
template <typename Scalar>
DenseVector<Scalar> stateSensitivityUpdate(
    const DenseMatrix<Scalar>& f, const DenseMatrix<Scalar>& f_prime,
    const StepOutput<Scalar>& out, const DenseMatrix<Scalar>& gain_prime,
    const DenseVector<Scalar>& x, const DenseVector<Scalar>& x_prime,
    const DenseVector<Scalar>& e_bar_prime) {
  return f_prime * x + f * x_prime + gain_prime * out.normalized_innovation +
         out.gain * e_bar_prime;
}

// Gradient contribution of one step for one parameter:
//   ∂l_k = -1/2·( tr(D_e'·D_e^{-1}) + 2·ē'^T·D_e^{-1}·ē - ē^T·D_e^{-2}·D_e'·ē ).
template <typename Scalar>
Scalar gradientTerm(const StepOutput<Scalar>& out,
                    const DenseVector<Scalar>& d_innov_prime,
                    const DenseVector<Scalar>& e_bar_prime) {
  Scalar acc = Scalar(0);
  for (Index i = 0; i < out.d_innov.dim(); ++i) {
    const Scalar d = out.d_innov(i);
    const Scalar eb = out.normalized_innovation(i);
    acc += d_innov_prime(i) / d + Scalar(2) * e_bar_prime(i) * eb / d -
           eb * eb / (d * d) * d_innov_prime(i);
  }
  return -acc / Scalar(2);
}

// Aggregate result of an extended (filter + sensitivity) run.
template <typename Scalar>
struct FilterRunResult {
  Scalar loglik = Scalar(0);
  DenseVector<Scalar> gradient;      // p entries
  FilterState<Scalar> final_state;
  SensitivityState<Scalar> final_sensitivity;
};

// Optional per-step observer. Receives the step index k, the post-step
// prediction x̂_{k+1|k}, its per-parameter sensitivities, and the step's
// log-likelihood term.
template <typename Scalar>
using StepObserver = std::function<void(
    Index, const FilterState<Scalar>&, const SensitivityState<Scalar>&, Scalar)>;

// Runs the extended UD filter over a measurement sequence, accumulating the
// log-likelihood and its gradient. One orthogonalization per step is shared
// by all p parameter propagations. Any library error is rethrown as an
// EvaluationError tagged with the step index.
template <typename Scalar>
FilterRunResult<Scalar> runExtendedFilter(
    const SystemMatrices<Scalar>& model, const SystemDerivatives<Scalar>& deriv,
    const std::vector<DenseVector<Scalar>>& measurements,
    const StepObserver<Scalar>& observer = nullptr) {
  const Index n = model.stateDim(), m = model.measDim();
  const int p = deriv.paramCount();

  FilterState<Scalar> state = initialFilterState(model);
  SensitivityState<Scalar> sens = initialSensitivityState(model, deriv);

  FilterRunResult<Scalar> result;
  result.gradient = DenseVector<Scalar>::Zero(p);

  for (std::size_t k = 0; k < measurements.size(); ++k) {
    try {
      const PreArrays<Scalar> pre = assemblePreArrays(model, state);
      const PostArrays<Scalar> post = mwgsOrthogonalize(pre);
      auto [next, out] = filterStepFromPost(model, state, measurements[k], post);

      SensitivityState<Scalar> next_sens;
      next_sens.x_prime.resize(static_cast<std::size_t>(p));
      next_sens.p_prime.resize(static_cast<std::size_t>(p));
      for (int i = 0; i < p; ++i) {
        const auto pi = static_cast<std::size_t>(i);
        const PreArrayDerivatives<Scalar> pre_prime =
            assemblePreArrayDerivatives(model, deriv, state, sens, i);
        StepSensitivity<Scalar> step_sens =
            propagateStepSensitivities(pre, pre_prime, post, n, m);
        auto [e_prime, e_bar_prime] = innovationSensitivity(
            out, step_sens.u_innov_prime, model.h, deriv.h[pi], state.x,
            sens.x_prime[pi]);
        result.gradient(i) += gradientTerm(out, step_sens.d_innov_prime, e_bar_prime);
        next_sens.x_prime[pi] = stateSensitivityUpdate(
            model.f, deriv.f[pi], out, step_sens.gain_prime, state.x,
            sens.x_prime[pi], e_bar_prime);
        next_sens.p_prime[pi] = {std::move(step_sens.u_p_prime),
                                 std::move(step_sens.d_p_prime)};
      }

      const Scalar term = loglikTerm(out);
      result.loglik += term;
      state = std::move(next);
      sens = std::move(next_sens);
      if (observer) observer(static_cast<Index>(k), state, sens, term);
    } catch (const EvaluationError&) {
      throw;
    } catch (const Error& e) {
      throw EvaluationError(e.what(), static_cast<Index>(k));
    }
  }

  result.final_state = state;
  result.final_sensitivity = sens;
  return result;
}

}  // namespace udkf
