#pragma once

// Modified weighted Gram-Schmidt (MWGS) orthogonalization of pre-array
// columns, and the analytic propagation of pre-array parameter derivatives
// to the resulting triangular/diagonal post-arrays.
//
// Given a pre-array A (r×s, r > s, full column rank) and a positive diagonal
// weight D_w, MWGS produces a unit upper triangular U (s×s), a positive
// diagonal D (s×s) and a D_w-orthogonal basis B (r×s) with
//
//   A^T = U·B^T,   B^T·D_w·B = D,   hence   A^T·D_w·A = U·D·U^T.

#include "udkf/core.hpp"
#include "udkf/matrix_core.hpp"

#include <cmath>
#include <limits>

namespace udkf {

// Weighted orthogonalization input: columns of `a` and diagonal weight `d_w`.
template <typename Scalar>
struct PreArrays {
  DenseMatrix<Scalar> a;        // r×s, r > s
  DiagonalFactor<Scalar> d_w;   // r×r, strictly positive diagonal

  Index rows() const { return a.rows(); }
  Index cols() const { return a.cols(); }
};

// Elementwise parameter derivatives of a pre-array pair.
template <typename Scalar>
struct PreArrayDerivatives {
  DenseMatrix<Scalar> a_prime;       // r×s
  DenseVector<Scalar> d_w_prime;     // diagonal entries, any sign
};

// Orthogonalization output: triangular factor, diagonal factor, and the
// weighted-orthogonal basis whose columns span the pre-array columns.
template <typename Scalar>
struct PostArrays {
  UnitUpper<Scalar> u;           // s×s
  DiagonalFactor<Scalar> d;      // s×s, strictly positive
  DenseMatrix<Scalar> basis;     // r×s, columns D_w-orthogonal
};

// Parameter derivatives of the post-array factors.
template <typename Scalar>
struct PostArrayDerivatives {
  DenseMatrix<Scalar> u_prime;       // strictly upper triangular s×s
  DenseVector<Scalar> d_prime;       // diagonal entries
};

namespace detail {

template <typename Scalar>
Scalar weightedDot(const DenseVector<Scalar>& w, const DenseMatrix<Scalar>& m,
                   Index col_x, Index col_y) {
  return (m.col(col_x).array() * w.array() * m.col(col_y).array()).sum();
}

template <typename Scalar>
void checkPreArrays(const PreArrays<Scalar>& pre) {
  require(pre.a.rows() > pre.a.cols() && pre.a.cols() > 0,
          "shape error: pre-array must be tall (rows > cols > 0)");
  require(pre.d_w.dim() == pre.a.rows(),
          "shape error: weight dimension must match pre-array rows");
  for (Index i = 0; i < pre.d_w.dim(); ++i)
    if (!(pre.d_w(i) > Scalar(0)))
      throw DomainError("degenerate weight: nonpositive diagonal entry");
}

}  // namespace detail

// Orthogonalizes the pre-array columns against each other under the D_w
// inner product, processing columns from last to first so that the
// transformation collects into a unit *upper* triangular factor.
//
// A column whose orthogonalized residual has no significant weighted norm
// left relative to its own starting norm signals numerical rank deficiency
// of the pre-array.
template <typename Scalar>
PostArrays<Scalar> mwgsOrthogonalize(const PreArrays<Scalar>& pre) {
  using std::sqrt;
  detail::checkPreArrays(pre);

  const Index s = pre.a.cols();
  const DenseVector<Scalar>& w = pre.d_w.diagonal();
  constexpr Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar reorth_threshold = Scalar(1e-8);

  PostArrays<Scalar> post;
  post.basis = pre.a;
  DenseMatrix<Scalar> u = DenseMatrix<Scalar>::Identity(s, s);
  DenseVector<Scalar> d(s);

  for (Index j = s - 1; j >= 0; --j) {
    const Scalar start_norm_sq = detail::weightedDot(w, post.basis, j, j);

    // First elimination sweep against the already-finished columns.
    for (Index i = j + 1; i < s; ++i) {
      const Scalar c = detail::weightedDot(w, post.basis, j, i) / d(i);
      u(j, i) += c;
      post.basis.col(j) -= c * post.basis.col(i);
    }

    // One reorthogonalization sweep when cancellation left the residual
    // visibly non-orthogonal relative to the weighted column norms.
    Scalar residual_norm_sq = detail::weightedDot(w, post.basis, j, j);
    bool need_second_sweep = false;
    for (Index i = j + 1; i < s && !need_second_sweep; ++i) {
      const Scalar overlap = detail::weightedDot(w, post.basis, j, i);
      if (std::abs(overlap) >
          reorth_threshold * sqrt(residual_norm_sq) * sqrt(d(i)))
        need_second_sweep = true;
    }
    if (need_second_sweep) {
      for (Index i = j + 1; i < s; ++i) {
        const Scalar c = detail::weightedDot(w, post.basis, j, i) / d(i);
        u(j, i) += c;
        post.basis.col(j) -= c * post.basis.col(i);
      }
      residual_norm_sq = detail::weightedDot(w, post.basis, j, j);
    }

    // Breakdown test relative to the column's own starting norm: the
    // residual norm is a sum of squares, so anything above roundoff noise
    // of the eliminations is a genuine (if tiny) pivot.
    const Scalar floor =
        (Scalar(4) * Scalar(pre.a.rows()) * eps) * (Scalar(4) * Scalar(pre.a.rows()) * eps) *
        start_norm_sq;
    if (!(residual_norm_sq > floor))
      throw RankError("rank-deficient pre-array");
    d(j) = residual_norm_sq;
  }

  post.u = UnitUpper<Scalar>::FromStrictUpper(u);
  post.d = DiagonalFactor<Scalar>(d);
  return post;
}

// Propagates pre-array parameter derivatives (A', D_w') to derivatives of
// the post-array factors (U', D').
//
// Differentiating A^T·D_w·A = U·D·U^T and using B^T·D_w·B = D gives, with
//   M0 = B^T·D_w·A'·U^{-T}   split as   M0 = L0 + D0 + V0,
//   M2 = B^T·D_w'·B          split as   M2 = V2^T + D2 + V2,
// the closed forms
//   U' = U·(L0^T + V0 + V2)·D^{-1},   D' = 2·D0 + D2.
template <typename Scalar>
PostArrayDerivatives<Scalar> mwgsDerivative(const PreArrays<Scalar>& pre,
                                            const PreArrayDerivatives<Scalar>& pre_prime,
                                            const PostArrays<Scalar>& post) {
  detail::checkPreArrays(pre);
  detail::require(pre_prime.a_prime.rows() == pre.a.rows() &&
                      pre_prime.a_prime.cols() == pre.a.cols(),
                  "shape error: pre-array derivative dimension mismatch");
  detail::require(pre_prime.d_w_prime.size() == pre.d_w.dim(),
                  "shape error: weight derivative dimension mismatch");
  detail::require(post.u.dim() == pre.a.cols() && post.basis.rows() == pre.a.rows(),
                  "shape error: post-array dimension mismatch");

  const Index s = pre.a.cols();
  for (Index i = 0; i < s; ++i)
    if (!(post.d(i) > Scalar(0)))
      throw RankError("derivative undefined at rank deficiency");

  const DenseMatrix<Scalar> weighted_basis =
      pre.d_w.diagonal().asDiagonal() * post.basis;

  DenseMatrix<Scalar> m0 = weighted_basis.transpose() * pre_prime.a_prime;
  m0 = solveUnitUpperRight(m0, post.u);
  const LduSplit<Scalar> split0 = splitLdu(m0);

  const DenseMatrix<Scalar> m2 =
      post.basis.transpose() * pre_prime.d_w_prime.asDiagonal() * post.basis;
  const LduSplit<Scalar> split2 = splitLdu(DenseMatrix<Scalar>(m2));

  PostArrayDerivatives<Scalar> out;
  out.u_prime =
      post.u.matrix() *
      (split0.strictly_lower.transpose() + split0.strictly_upper + split2.strictly_upper);
  out.u_prime.array().rowwise() /= post.d.diagonal().transpose().array();
  out.d_prime = Scalar(2) * split0.diagonal + split2.diagonal;
  return out;
}

}  // namespace udkf
