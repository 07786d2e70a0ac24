#pragma once

// Maximum-likelihood estimation on the negative log-likelihood, driven by
// the analytic gradient from either filtering pipeline. The minimizer is a
// BFGS-style quasi-Newton iteration with Armijo backtracking; parameters
// with positivity constraints are handled by an internal log
// reparameterization so the line search can never leave the domain.

#include "udkf/baseline_kf.hpp"
#include "udkf/core.hpp"
#include "udkf/models.hpp"
#include "udkf/sensitivity.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace udkf {

enum class Engine { kUd, kConventionalDiff };

// Negative log-likelihood objective over a fixed measurement record.
template <typename Scalar>
struct Objective {
  ParametricModel<Scalar> model;
  std::vector<DenseVector<Scalar>> measurements;
  Engine engine = Engine::kUd;
};

template <typename Scalar>
struct ObjectiveValue {
  Scalar neg_loglik;
  DenseVector<Scalar> neg_gradient;
};

// One filtering pass produces the matched pair (-L, -dL/dtheta).
template <typename Scalar>
ObjectiveValue<Scalar> evaluate(const Objective<Scalar>& obj,
                                const DenseVector<Scalar>& theta) {
  const SystemMatrices<Scalar> mats = obj.model.at(theta);
  const SystemDerivatives<Scalar> deriv = obj.model.derivativesAt(theta);
  const FilterRunResult<Scalar> run =
      obj.engine == Engine::kUd
          ? runExtendedFilter(mats, deriv, obj.measurements)
          : runDiffKf(mats, deriv, obj.measurements);
  return {-run.loglik, DenseVector<Scalar>(-run.gradient)};
}

struct MinimizeOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;  // relative: ||g|| <= tol·(1 + |f|)
  double armijo_slope = 1e-4;
  double min_step = 1e-16;           // line-search collapse threshold
  double step_tolerance = 1e-10;     // accepted-step collapse threshold
};

template <typename Scalar>
struct EstimationResult {
  DenseVector<Scalar> theta_hat;
  Scalar neg_loglik = std::numeric_limits<Scalar>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  Scalar final_gradient_norm = std::numeric_limits<Scalar>::quiet_NaN();
  std::string failure_reason;  // empty when converged
};

// Generic evaluation callback for the minimizer: fills (value, gradient) at
// x and returns false when the objective cannot be evaluated there (treated
// as an infinite objective by the line search).
template <typename Scalar>
using ObjectiveFn =
    std::function<bool(const DenseVector<Scalar>&, Scalar&, DenseVector<Scalar>&)>;

// BFGS with Armijo backtracking on an unconstrained objective. Failures at
// trial points reject the step; failure at the initial point aborts.
template <typename Scalar>
EstimationResult<Scalar> minimizeFunction(const ObjectiveFn<Scalar>& fn,
                                          const DenseVector<Scalar>& x0,
                                          const MinimizeOptions& opts = {}) {
  using std::isfinite;
  const Index p = x0.size();

  EstimationResult<Scalar> result;
  result.theta_hat = x0;

  DenseVector<Scalar> x = x0, g(p);
  Scalar f = Scalar(0);
  auto tryEval = [&fn](const DenseVector<Scalar>& at, Scalar& value,
                       DenseVector<Scalar>& grad) {
    if (!fn(at, value, grad)) return false;
    if (!isfinite(value)) return false;
    for (Index i = 0; i < grad.size(); ++i)
      if (!isfinite(grad(i))) return false;
    return true;
  };

  if (!tryEval(x, f, g)) {
    result.failure_reason = "objective evaluation failed at the initial point";
    return result;
  }
  result.neg_loglik = f;
  result.final_gradient_norm = g.norm();

  DenseMatrix<Scalar> hinv = DenseMatrix<Scalar>::Identity(p, p);
  bool hinv_scaled = false;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Scalar gnorm = g.norm();
    result.final_gradient_norm = gnorm;
    if (gnorm <= Scalar(opts.gradient_tolerance) * (Scalar(1) + std::abs(f))) {
      result.converged = true;
      break;
    }

    DenseVector<Scalar> direction = -(hinv * g);
    Scalar slope = direction.dot(g);
    if (!(slope < Scalar(0))) {
      hinv = DenseMatrix<Scalar>::Identity(p, p);
      hinv_scaled = false;
      direction = -g;
      slope = -gnorm * gnorm;
    }

    // Backtracking line search with the Armijo sufficient-decrease test.
    Scalar alpha = iter == 0 ? std::min(Scalar(1), Scalar(1) / gnorm) : Scalar(1);
    DenseVector<Scalar> x_new(p), g_new(p);
    Scalar f_new = Scalar(0);
    bool accepted = false;
    while (alpha >= Scalar(opts.min_step)) {
      x_new = x + alpha * direction;
      if (tryEval(x_new, f_new, g_new) &&
          f_new <= f + Scalar(opts.armijo_slope) * alpha * slope) {
        accepted = true;
        break;
      }
      alpha /= Scalar(2);
    }
    if (!accepted) {
      result.failure_reason = "line search step collapse";
      break;
    }

    const DenseVector<Scalar> s = x_new - x;
    const DenseVector<Scalar> yv = g_new - g;
    // An accepted step this small means the iterate has stopped moving — the
    // remaining gradient is dominated by rounding noise, so later iterations
    // would only re-accept negligible steps. Stop as a step collapse instead
    // of spending the rest of the iteration budget in place.
    if (s.norm() <= Scalar(opts.step_tolerance) * (Scalar(1) + x_new.norm())) {
      x = x_new;
      f = f_new;
      g = g_new;
      result.theta_hat = x;
      result.neg_loglik = f;
      result.final_gradient_norm = g.norm();
      result.iterations = iter + 1;
      result.failure_reason = "line search step collapse";
      break;
    }
    const Scalar sy = s.dot(yv);
    if (sy > Scalar(1e-12) * s.norm() * yv.norm()) {
      if (!hinv_scaled) {
        hinv *= sy / yv.squaredNorm();
        hinv_scaled = true;
      }
      const Scalar rho = Scalar(1) / sy;
      const DenseVector<Scalar> hy = hinv * yv;
      // Sherman-Morrison form of the BFGS inverse-Hessian update.
      hinv += (rho * rho * (yv.dot(hy) + sy)) * (s * s.transpose()) -
              rho * (hy * s.transpose() + s * hy.transpose());
    }

    x = x_new;
    f = f_new;
    g = g_new;
    result.theta_hat = x;
    result.neg_loglik = f;
    result.iterations = iter + 1;
  }

  if (!result.converged && result.failure_reason.empty())
    result.failure_reason = "iteration limit reached";
  return result;
}

namespace detail {

template <typename Scalar>
DenseVector<Scalar> toInternal(const DenseVector<Scalar>& theta,
                               const std::vector<bool>& positive) {
  DenseVector<Scalar> eta = theta;
  for (Index i = 0; i < theta.size(); ++i)
    if (positive[static_cast<std::size_t>(i)]) {
      if (!(theta(i) > Scalar(0))) throw DomainError("parameter out of domain");
      eta(i) = std::log(theta(i));
    }
  return eta;
}

template <typename Scalar>
DenseVector<Scalar> fromInternal(const DenseVector<Scalar>& eta,
                                 const std::vector<bool>& positive) {
  DenseVector<Scalar> theta = eta;
  for (Index i = 0; i < eta.size(); ++i)
    if (positive[static_cast<std::size_t>(i)]) theta(i) = std::exp(eta(i));
  return theta;
}

}  // namespace detail

// Maximum-likelihood estimation from theta0. Reported quantities are in
// natural parameter units; positivity-constrained coordinates are optimized
// on a log scale internally (chain rule applied to the gradient).
template <typename Scalar>
EstimationResult<Scalar> minimize(const Objective<Scalar>& obj,
                                  const DenseVector<Scalar>& theta0,
                                  const MinimizeOptions& opts = {}) {
  detail::require(theta0.size() == obj.model.p,
                  "shape error: parameter count mismatch");
  const std::vector<bool>& positive = obj.model.positive;
  const DenseVector<Scalar> eta0 = detail::toInternal(theta0, positive);

  ObjectiveFn<Scalar> fn = [&obj, &positive](const DenseVector<Scalar>& eta,
                                             Scalar& value,
                                             DenseVector<Scalar>& grad) {
    const DenseVector<Scalar> theta = detail::fromInternal(eta, positive);
    try {
      ObjectiveValue<Scalar> v = evaluate(obj, theta);
      value = v.neg_loglik;
      grad = v.neg_gradient;
      for (Index i = 0; i < theta.size(); ++i)
        if (positive[static_cast<std::size_t>(i)]) grad(i) *= theta(i);
      return true;
    } catch (const Error&) {
      return false;
    }
  };

  EstimationResult<Scalar> result = minimizeFunction(fn, eta0, opts);
  result.theta_hat = detail::fromInternal(DenseVector<Scalar>(result.theta_hat),
                                          positive);
  return result;
}

// One scan row: objective and gradient at a grid point, or the failure that
// prevented evaluation there.
template <typename Scalar>
struct ScanRow {
  Scalar theta;
  Scalar neg_loglik = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar neg_gradient = std::numeric_limits<Scalar>::quiet_NaN();
  bool ok = false;
  std::string error;
};

template <typename Scalar>
struct ScanResult {
  std::vector<ScanRow<Scalar>> rows;
  int argmin_index = -1;     // index of the smallest ok neg_loglik
  int crossing_index = -1;   // first i where neg_gradient changes sign between rows i, i+1
  int sign_changes = 0;      // count of such sign changes over the whole grid
};

// Evaluates the objective over a one-parameter grid; per-point failures are
// recorded in-row and the scan continues.
template <typename Scalar>
ScanResult<Scalar> scan(const Objective<Scalar>& obj,
                        const std::vector<Scalar>& grid) {
  detail::require(obj.model.p == 1, "shape error: scan requires one parameter");
  detail::require(!grid.empty(), "shape error: empty scan grid");

  ScanResult<Scalar> result;
  result.rows.reserve(grid.size());
  for (const Scalar t : grid) {
    ScanRow<Scalar> row;
    row.theta = t;
    try {
      DenseVector<Scalar> theta(1);
      theta << t;
      const ObjectiveValue<Scalar> v = evaluate(obj, theta);
      row.neg_loglik = v.neg_loglik;
      row.neg_gradient = v.neg_gradient(0);
      row.ok = true;
    } catch (const Error& e) {
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }

  const ScanRow<Scalar>* prev = nullptr;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const ScanRow<Scalar>& row = result.rows[i];
    if (!row.ok) continue;
    if (result.argmin_index < 0 ||
        row.neg_loglik < result.rows[static_cast<std::size_t>(result.argmin_index)].neg_loglik)
      result.argmin_index = static_cast<int>(i);
    if (prev != nullptr && prev->neg_gradient * row.neg_gradient < Scalar(0)) {
      if (result.crossing_index < 0)
        result.crossing_index = static_cast<int>(&*prev - result.rows.data());
      ++result.sign_changes;
    }
    prev = &row;
  }
  return result;
}

}  // namespace udkf
