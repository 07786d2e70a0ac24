#pragma once

// Array covariance Kalman filter in UD form. Each step orthogonalizes one
// stacked pre-array and reads every filter quantity (predicted covariance
// factors, gain block, innovation covariance factors) off the post-arrays,
// so no covariance difference is ever formed explicitly.
//
// Model (discrete-time linear Gaussian):
//   x_{k+1} = F·x_k + G·w_k,   z_k = H·x_k + v_k,
//   w ~ N(0, Q),  v ~ N(0, R),  x_0 ~ N(0, Pi0),
// with the filter recursion running on the one-step-ahead prediction
// x̂_{k+1|k} and its covariance factors.

#include "udkf/core.hpp"
#include "udkf/matrix_core.hpp"
#include "udkf/mwgs.hpp"

#include <cmath>
#include <utility>

namespace udkf {

// System matrices at a fixed parameter value, carried both densely (for the
// conventional baseline and for simulation) and in factored form (for the
// UD recursion).
template <typename Scalar>
struct SystemMatrices {
  DenseMatrix<Scalar> f;    // n×n transition
  DenseMatrix<Scalar> g;    // n×q noise input
  DenseMatrix<Scalar> h;    // m×n measurement
  DenseMatrix<Scalar> q;    // q×q process noise covariance (PSD)
  DenseMatrix<Scalar> r;    // m×m measurement noise covariance (PD)
  DenseMatrix<Scalar> pi0;  // n×n initial covariance (PD)

  UdFactors<Scalar> q_ud;
  UdFactors<Scalar> r_ud;
  UdFactors<Scalar> pi0_ud;

  Index stateDim() const { return f.rows(); }
  Index measDim() const { return h.rows(); }
  Index noiseDim() const { return g.cols(); }

  // Populates the factored covariances from the dense ones.
  void factorize() {
    q_ud = udFromCovariance(q);
    r_ud = udFromCovariance(r);
    pi0_ud = udFromCovariance(pi0);
  }

  void checkShapes() const {
    const Index n = f.rows(), m = h.rows(), nq = g.cols();
    detail::require(f.cols() == n, "shape error: transition matrix must be square");
    detail::require(g.rows() == n, "shape error: noise input rows must match state");
    detail::require(h.cols() == n, "shape error: measurement cols must match state");
    detail::require(q.rows() == nq && q.cols() == nq,
                    "shape error: process noise covariance dimension");
    detail::require(r.rows() == m && r.cols() == m,
                    "shape error: measurement noise covariance dimension");
    detail::require(pi0.rows() == n && pi0.cols() == n,
                    "shape error: initial covariance dimension");
  }
};

// Filter state before processing measurement k: the prediction x̂_{k|k-1}
// and the UD factors of its covariance P_{k|k-1}.
template <typename Scalar>
struct FilterState {
  Index k = 0;
  DenseVector<Scalar> x;
  UdFactors<Scalar> p;
};

// Everything one step produces besides the next state.
template <typename Scalar>
struct StepOutput {
  UnitUpper<Scalar> u_p_next;        // n×n
  DiagonalFactor<Scalar> d_p_next;   // n
  DenseMatrix<Scalar> gain;          // n×m, equals K_p·U_e (gain times innovation factor)
  UnitUpper<Scalar> u_innov;         // m×m innovation covariance factor U_e
  DiagonalFactor<Scalar> d_innov;    // m, innovation covariance factor D_e
  DenseVector<Scalar> innovation;              // e = z - H·x̂
  DenseVector<Scalar> normalized_innovation;   // ē = U_e^{-1}·e
};

template <typename Scalar>
FilterState<Scalar> initialFilterState(const SystemMatrices<Scalar>& model) {
  FilterState<Scalar> state;
  state.k = 0;
  state.x = DenseVector<Scalar>::Zero(model.stateDim());
  state.p = model.pi0_ud;
  return state;
}

// Stacks the step pre-array. With r = q+n+m rows and s = n+m columns,
//   A^T = [ G·U_Q   F·U_P   0   ]         D_w = diag(D_Q, D_P, D_R),
//         [   0     H·U_P   U_R ],
// so that A^T·D_w·A reproduces the step's covariance Gram matrix.
template <typename Scalar>
PreArrays<Scalar> assemblePreArrays(const SystemMatrices<Scalar>& model,
                                    const FilterState<Scalar>& state) {
  const Index n = model.stateDim(), m = model.measDim(), q = model.noiseDim();
  detail::require(state.x.size() == n && state.p.dim() == n,
                  "shape error: filter state dimension mismatch");

  DenseMatrix<Scalar> at = DenseMatrix<Scalar>::Zero(n + m, q + n + m);
  at.block(0, 0, n, q).noalias() = model.g * model.q_ud.u.matrix();
  at.block(0, q, n, n).noalias() = model.f * state.p.u.matrix();
  at.block(n, q, m, n).noalias() = model.h * state.p.u.matrix();
  at.block(n, q + n, m, m) = model.r_ud.u.matrix();

  PreArrays<Scalar> pre;
  pre.a = at.transpose();
  DenseVector<Scalar> w(q + n + m);
  w.segment(0, q) = model.q_ud.d.diagonal();
  w.segment(q, n) = state.p.d.diagonal();
  w.segment(q + n, m) = model.r_ud.d.diagonal();
  pre.d_w = DiagonalFactor<Scalar>(w);
  return pre;
}

// Reads the filter quantities off the post-array blocks:
//   U = [ U_P+  K_p·U_e ]        D = diag(D_P+, D_e).
//       [   0     U_e   ]
template <typename Scalar>
StepOutput<Scalar> readPostArrays(const PostArrays<Scalar>& post, Index n, Index m) {
  detail::require(post.u.dim() == n + m, "shape error: post-array block split");
  const DenseMatrix<Scalar>& u = post.u.matrix();
  StepOutput<Scalar> out;
  out.u_p_next = UnitUpper<Scalar>::FromStrictUpper(u.block(0, 0, n, n).eval());
  out.d_p_next = DiagonalFactor<Scalar>(post.d.diagonal().segment(0, n).eval());
  out.gain = u.block(0, n, n, m);
  out.u_innov = UnitUpper<Scalar>::FromStrictUpper(u.block(n, n, m, m).eval());
  out.d_innov = DiagonalFactor<Scalar>(post.d.diagonal().segment(n, m).eval());
  return out;
}

// Completes a step from precomputed post-arrays (shared with the
// sensitivity propagation, which needs the same orthogonalization).
template <typename Scalar>
std::pair<FilterState<Scalar>, StepOutput<Scalar>> filterStepFromPost(
    const SystemMatrices<Scalar>& model, const FilterState<Scalar>& state,
    const DenseVector<Scalar>& z, const PostArrays<Scalar>& post) {
  const Index n = model.stateDim(), m = model.measDim();
  detail::require(z.size() == m, "shape error: measurement dimension mismatch");

  StepOutput<Scalar> out = readPostArrays(post, n, m);
  for (Index i = 0; i < m; ++i)
    if (!(out.d_innov(i) > Scalar(0)))
      throw FilterError("invalid innovation covariance");

  out.innovation = z - model.h * state.x;
  out.normalized_innovation = solveUnitUpperLeft(out.u_innov, out.innovation);

  FilterState<Scalar> next;
  next.k = state.k + 1;
  next.x = model.f * state.x + out.gain * out.normalized_innovation;
  next.p = {out.u_p_next, out.d_p_next};
  return {std::move(next), std::move(out)};
}

// One full measurement-update/prediction step.
template <typename Scalar>
std::pair<FilterState<Scalar>, StepOutput<Scalar>> filterStep(
    const SystemMatrices<Scalar>& model, const FilterState<Scalar>& state,
    const DenseVector<Scalar>& z) {
  const PreArrays<Scalar> pre = assemblePreArrays(model, state);
  const PostArrays<Scalar> post = mwgsOrthogonalize(pre);
  return filterStepFromPost(model, state, z, post);
}

// Gaussian log-likelihood contribution of one step, written in the UD
// variables: with R_e = U_e·D_e·U_e^T and ē = U_e^{-1}·e,
//   l_k = -m/2·ln(2π) - 1/2·( Σ ln d_i + ē^T·D_e^{-1}·ē ).
template <typename Scalar>
Scalar loglikTerm(const StepOutput<Scalar>& out) {
  using std::log;
  const Index m = out.d_innov.dim();
  Scalar value = -Scalar(m) / Scalar(2) * log(Scalar(2) * Scalar(EIGEN_PI));
  for (Index i = 0; i < m; ++i) {
    if (!(out.d_innov(i) > Scalar(0)))
      throw FilterError("invalid innovation covariance");
    value -= (log(out.d_innov(i)) +
              out.normalized_innovation(i) * out.normalized_innovation(i) /
                  out.d_innov(i)) /
             Scalar(2);
  }
  return value;
}

}  // namespace udkf
