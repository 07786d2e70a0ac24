#pragma once

// Catalog of parametric test systems and a seeded Gaussian trajectory
// simulator.
//
//   * a static pre-array family with exact symbolic derivatives (the
//     worked example for the orthogonalization-derivative rule);
//   * a one-channel inertial-navigation error model with unknown gyro
//     drift-rate time constant gamma1;
//   * an ill-conditioned family whose innovation covariance approaches
//     numerical singularity as delta -> 0;
//   * a parameter-independent constant model (plumbing for tests).

#include "udkf/core.hpp"
#include "udkf/matrix_core.hpp"
#include "udkf/mwgs.hpp"
#include "udkf/sensitivity.hpp"
#include "udkf/ud_filter.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace udkf {

// A parametric linear-Gaussian state-space model: evaluators mapping a
// parameter vector to the system matrices and to their derivatives.
template <typename Scalar>
struct ParametricModel {
  std::string name;
  Index n = 0, m = 0, q = 0;
  int p = 0;
  std::vector<bool> positive;  // per-parameter positivity constraint

  std::function<SystemMatrices<Scalar>(const DenseVector<Scalar>&)> at;
  std::function<SystemDerivatives<Scalar>(const DenseVector<Scalar>&)> derivativesAt;
};

// All-zero derivative bundle shaped like `model`, for p parameters.
template <typename Scalar>
SystemDerivatives<Scalar> zeroSystemDerivatives(const SystemMatrices<Scalar>& model,
                                                int p) {
  const Index n = model.stateDim(), m = model.measDim(), q = model.noiseDim();
  SystemDerivatives<Scalar> d;
  const auto np = static_cast<std::size_t>(p);
  d.f.assign(np, DenseMatrix<Scalar>::Zero(n, n));
  d.g.assign(np, DenseMatrix<Scalar>::Zero(n, q));
  d.h.assign(np, DenseMatrix<Scalar>::Zero(m, n));
  d.q.assign(np, DenseMatrix<Scalar>::Zero(q, q));
  d.r.assign(np, DenseMatrix<Scalar>::Zero(m, m));
  d.pi0.assign(np, DenseMatrix<Scalar>::Zero(n, n));
  d.q_ud.assign(np, FactorDerivative<Scalar>::Zero(q));
  d.r_ud.assign(np, FactorDerivative<Scalar>::Zero(m));
  d.pi0_ud.assign(np, FactorDerivative<Scalar>::Zero(n));
  return d;
}

// ---------------------------------------------------------------------------
// Static pre-array family (one scalar parameter theta > 0):
//   A = [ t^5/20  t^4/8 ]      D_w = diag(t, t^2, t^3),
//       [ t^4/8   t^3/3 ]
//       [ t^3/6   t^2/2 ]
// with exact symbolic derivatives. This is not a filter model; it feeds the
// orthogonalization kernel directly.

template <typename Scalar>
PreArrays<Scalar> example1PreArrays(Scalar theta) {
  if (theta == Scalar(0)) throw DomainError("degenerate weight");
  const Scalar t = theta;
  PreArrays<Scalar> pre;
  pre.a = DenseMatrix<Scalar>(3, 2);
  pre.a << std::pow(t, 5) / Scalar(20), std::pow(t, 4) / Scalar(8),
      std::pow(t, 4) / Scalar(8), std::pow(t, 3) / Scalar(3),
      std::pow(t, 3) / Scalar(6), t * t / Scalar(2);
  DenseVector<Scalar> w(3);
  w << t, t * t, t * t * t;
  pre.d_w = DiagonalFactor<Scalar>(w);
  return pre;
}

template <typename Scalar>
PreArrayDerivatives<Scalar> example1PreArrayDerivatives(Scalar theta) {
  if (theta == Scalar(0)) throw DomainError("degenerate weight");
  const Scalar t = theta;
  PreArrayDerivatives<Scalar> prime;
  prime.a_prime = DenseMatrix<Scalar>(3, 2);
  prime.a_prime << std::pow(t, 4) / Scalar(4), std::pow(t, 3) / Scalar(2),
      std::pow(t, 3) / Scalar(2), t * t, t * t / Scalar(2), t;
  prime.d_w_prime = DenseVector<Scalar>(3);
  prime.d_w_prime << Scalar(1), Scalar(2) * t, Scalar(3) * t * t;
  return prime;
}

// ---------------------------------------------------------------------------
// One-channel INS error model (states: position-ish, velocity-ish errors and
// two instrument error states; p = 1, parameter gamma1 > 0).

struct InsConstants {
  double tau = 0.1;     // sampling interval [s]
  double g = 9.81;      // gravity [m/s^2]
  double a = 6.378e6;   // Earth radius [m]
  double h1 = 1.0;      // drift-noise scale
};

template <typename Scalar>
ParametricModel<Scalar> insModel(const InsConstants& c = InsConstants{}) {
  if (!(c.tau > 0 && c.g > 0 && c.a > 0 && c.h1 > 0))
    throw DomainError("parameter out of domain");

  ParametricModel<Scalar> model;
  model.name = "ins";
  model.n = 4;
  model.m = 1;
  model.q = 1;
  model.p = 1;
  model.positive = {true};

  auto checkTheta = [](const DenseVector<Scalar>& theta) {
    detail::require(theta.size() == 1, "shape error: parameter count mismatch");
    if (!(theta(0) > Scalar(0))) throw DomainError("parameter out of domain");
  };

  model.at = [c, checkTheta](const DenseVector<Scalar>& theta) {
    checkTheta(theta);
    const Scalar gamma1 = theta(0);
    const Scalar tau = Scalar(c.tau), grav = Scalar(c.g), radius = Scalar(c.a),
                 h1 = Scalar(c.h1);
    const Scalar b1 = Scalar(1) - gamma1 * tau;
    const Scalar a1 = h1 * std::sqrt(Scalar(2) * gamma1 * tau);

    SystemMatrices<Scalar> mats;
    mats.f = DenseMatrix<Scalar>(4, 4);
    mats.f << Scalar(1), -tau * grav, tau, Scalar(0),
              tau / radius, Scalar(1), Scalar(0), tau,
              Scalar(0), Scalar(0), b1, Scalar(0),
              Scalar(0), Scalar(0), Scalar(0), Scalar(1);
    mats.g = DenseMatrix<Scalar>::Zero(4, 1);
    mats.g(2, 0) = a1;
    mats.h = DenseMatrix<Scalar>::Zero(1, 4);
    mats.h(0, 0) = Scalar(1);
    mats.q = DenseMatrix<Scalar>::Constant(1, 1, Scalar(1));
    mats.r = DenseMatrix<Scalar>::Constant(1, 1, Scalar(0.01));
    mats.pi0 = DenseMatrix<Scalar>::Identity(4, 4);
    mats.checkShapes();
    mats.factorize();
    return mats;
  };

  model.derivativesAt = [c, checkTheta, at = model.at](const DenseVector<Scalar>& theta) {
    checkTheta(theta);
    const Scalar gamma1 = theta(0);
    const Scalar tau = Scalar(c.tau), h1 = Scalar(c.h1);
    SystemDerivatives<Scalar> d = zeroSystemDerivatives(at(theta), 1);
    d.f[0](2, 2) = -tau;
    d.g[0](2, 0) = h1 * tau / std::sqrt(Scalar(2) * gamma1 * tau);
    return d;
  };
  return model;
}

// ---------------------------------------------------------------------------
// Ill-conditioned family (p = 1, parameter theta; conditioning knob delta):
// two nearly collinear measurement rows make R_e approach singularity as
// delta -> 0. The process noise channel is inert (G = 0) but kept as an
// explicit zero column so every model shares one pre-array layout.

template <typename Scalar>
ParametricModel<Scalar> illcondModel(Scalar delta) {
  if (!(delta > Scalar(0))) throw DomainError("parameter out of domain");

  ParametricModel<Scalar> model;
  model.name = "illcond";
  model.n = 3;
  model.m = 2;
  model.q = 1;
  model.p = 1;
  model.positive = {true};

  model.at = [delta](const DenseVector<Scalar>& theta) {
    detail::require(theta.size() == 1, "shape error: parameter count mismatch");
    const Scalar t = theta(0);
    SystemMatrices<Scalar> mats;
    mats.f = DenseMatrix<Scalar>::Identity(3, 3);
    mats.g = DenseMatrix<Scalar>::Zero(3, 1);
    mats.h = DenseMatrix<Scalar>(2, 3);
    mats.h << Scalar(1), Scalar(1), Scalar(1),
              Scalar(1), Scalar(1), Scalar(1) + delta;
    mats.q = DenseMatrix<Scalar>::Constant(1, 1, Scalar(1));
    mats.r = DenseMatrix<Scalar>((delta * delta * t * t) *
                                 DenseMatrix<Scalar>::Identity(2, 2));
    mats.pi0 = DenseMatrix<Scalar>((t * t) * DenseMatrix<Scalar>::Identity(3, 3));
    mats.checkShapes();
    mats.factorize();
    return mats;
  };

  model.derivativesAt = [delta, at = model.at](const DenseVector<Scalar>& theta) {
    const Scalar t = theta(0);
    SystemDerivatives<Scalar> d = zeroSystemDerivatives(at(theta), 1);
    d.r[0] = DenseMatrix<Scalar>((Scalar(2) * delta * delta * t) *
                                 DenseMatrix<Scalar>::Identity(2, 2));
    d.pi0[0] = DenseMatrix<Scalar>((Scalar(2) * t) * DenseMatrix<Scalar>::Identity(3, 3));
    d.r_ud[0].d_prime = d.r[0].diagonal();
    d.pi0_ud[0].d_prime = d.pi0[0].diagonal();
    return d;
  };
  return model;
}

// ---------------------------------------------------------------------------
// Parameter-independent constant model (p = 1 with zero derivatives).

template <typename Scalar>
ParametricModel<Scalar> constantModel() {
  ParametricModel<Scalar> model;
  model.name = "constant";
  model.n = 2;
  model.m = 1;
  model.q = 1;
  model.p = 1;
  model.positive = {false};

  model.at = [](const DenseVector<Scalar>& theta) {
    detail::require(theta.size() == 1, "shape error: parameter count mismatch");
    SystemMatrices<Scalar> mats;
    mats.f = DenseMatrix<Scalar>(2, 2);
    mats.f << Scalar(0.9), Scalar(0.1), Scalar(0), Scalar(0.8);
    mats.g = DenseMatrix<Scalar>(2, 1);
    mats.g << Scalar(0.5), Scalar(1);
    mats.h = DenseMatrix<Scalar>(1, 2);
    mats.h << Scalar(1), Scalar(0);
    mats.q = DenseMatrix<Scalar>::Constant(1, 1, Scalar(1));
    mats.r = DenseMatrix<Scalar>::Constant(1, 1, Scalar(0.5));
    mats.pi0 = DenseMatrix<Scalar>::Identity(2, 2);
    mats.checkShapes();
    mats.factorize();
    return mats;
  };
  model.derivativesAt = [at = model.at](const DenseVector<Scalar>& theta) {
    return zeroSystemDerivatives(at(theta), 1);
  };
  return model;
}

// ---------------------------------------------------------------------------
// Finite-difference consistency gate for a model's derivative evaluator:
// returns the largest normalized deviation between analytic and central
// finite-difference derivatives of all six system matrices.

template <typename Scalar>
Scalar checkModelDerivatives(const ParametricModel<Scalar>& model,
                             const DenseVector<Scalar>& theta) {
  const SystemDerivatives<Scalar> d = model.derivativesAt(theta);
  Scalar worst = Scalar(0);
  auto compare = [&worst](const DenseMatrix<Scalar>& analytic,
                          const DenseMatrix<Scalar>& fd) {
    const Scalar scale = Scalar(1) + fd.template lpNorm<Eigen::Infinity>();
    const Scalar dev = (analytic - fd).template lpNorm<Eigen::Infinity>() / scale;
    worst = std::max(worst, dev);
  };

  for (int i = 0; i < model.p; ++i) {
    const Scalar h = Scalar(1e-6) * std::max(Scalar(1), std::abs(theta(i)));
    DenseVector<Scalar> plus = theta, minus = theta;
    plus(i) += h;
    minus(i) -= h;
    const SystemMatrices<Scalar> mp = model.at(plus);
    const SystemMatrices<Scalar> mm = model.at(minus);
    const Scalar den = Scalar(2) * h;
    const auto pi = static_cast<std::size_t>(i);
    compare(d.f[pi], DenseMatrix<Scalar>((mp.f - mm.f) / den));
    compare(d.g[pi], DenseMatrix<Scalar>((mp.g - mm.g) / den));
    compare(d.h[pi], DenseMatrix<Scalar>((mp.h - mm.h) / den));
    compare(d.q[pi], DenseMatrix<Scalar>((mp.q - mm.q) / den));
    compare(d.r[pi], DenseMatrix<Scalar>((mp.r - mm.r) / den));
    compare(d.pi0[pi], DenseMatrix<Scalar>((mp.pi0 - mm.pi0) / den));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Seeded Gaussian simulation.

// Deterministic standard-normal stream: mt19937_64 bits mapped to [0,1)
// doubles via the top 53 bits, turned Gaussian by the Box-Muller transform.
// Both algorithm and draw order are fixed so trajectories are reproducible
// across platforms and standard-library versions.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - toUnit(rng_());  // in (0, 1], keeps log finite
    const double u2 = toUnit(rng_());        // in [0, 1)
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * EIGEN_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static double toUnit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

  std::mt19937_64 rng_;
  double spare_ = 0;
  bool have_spare_ = false;
};

template <typename Scalar>
struct Trajectory {
  std::uint64_t seed = 0;
  DenseVector<Scalar> theta_true;
  std::vector<DenseVector<Scalar>> states;
  std::vector<DenseVector<Scalar>> measurements;
};

namespace detail {

// Draws y ~ N(0, U·D·U^T) as y = U·(sqrt(D)·xi) with xi standard normal.
template <typename Scalar>
DenseVector<Scalar> sampleFromFactors(const UdFactors<Scalar>& ud,
                                      GaussianSampler& sampler) {
  const Index dim = ud.dim();
  DenseVector<Scalar> xi(dim);
  for (Index i = 0; i < dim; ++i) {
    if (!(ud.d(i) >= Scalar(0)))
      throw FactorizationError("not positive definite");
    xi(i) = std::sqrt(ud.d(i)) * Scalar(sampler.next());
  }
  return ud.u.matrix() * xi;
}

}  // namespace detail

// Simulates n_steps states and measurements:
//   x_0 ~ N(0, Pi0),  x_k = F·x_{k-1} + G·w_k,  z_k = H·x_k + v_k.
// Draw order (fixed): x_0 (n draws), v_0 (m draws), then per step k >= 1
// w_k (q draws) followed by v_k (m draws).
template <typename Scalar>
Trajectory<Scalar> simulate(const ParametricModel<Scalar>& model,
                            const DenseVector<Scalar>& theta, Index n_steps,
                            std::uint64_t seed) {
  const SystemMatrices<Scalar> mats = model.at(theta);
  GaussianSampler sampler(seed);

  Trajectory<Scalar> traj;
  traj.seed = seed;
  traj.theta_true = theta;
  traj.states.reserve(static_cast<std::size_t>(n_steps));
  traj.measurements.reserve(static_cast<std::size_t>(n_steps));

  DenseVector<Scalar> x;
  for (Index k = 0; k < n_steps; ++k) {
    if (k == 0) {
      x = detail::sampleFromFactors(mats.pi0_ud, sampler);
    } else {
      x = mats.f * x + mats.g * detail::sampleFromFactors(mats.q_ud, sampler);
    }
    traj.states.push_back(x);
    traj.measurements.push_back(mats.h * x +
                                detail::sampleFromFactors(mats.r_ud, sampler));
  }
  return traj;
}

}  // namespace udkf
