#pragma once

// Structured triangular/diagonal matrix types and the modified Cholesky
// (U·D·U^T) factorization together with its analytic parameter derivative.
//
// Conventions used throughout:
//   * U is unit upper triangular (ones on the diagonal, zeros below);
//   * D is diagonal and stored as a vector of diagonal entries;
//   * a symmetric positive definite S factors uniquely as S = U·D·U^T.

#include "udkf/core.hpp"

#include <cmath>
#include <utility>

namespace udkf {

// Diagonal matrix stored as its diagonal vector. Entries are not sign
// constrained here; consumers state their own positivity requirements.
template <typename Scalar>
class DiagonalFactor {
 public:
  DiagonalFactor() = default;

  explicit DiagonalFactor(DenseVector<Scalar> diag) : diag_(std::move(diag)) {}

  static DiagonalFactor Identity(Index n) {
    return DiagonalFactor(DenseVector<Scalar>::Ones(n));
  }

  Index dim() const { return diag_.size(); }
  const DenseVector<Scalar>& diagonal() const { return diag_; }
  Scalar operator()(Index i) const { return diag_(i); }

  DenseMatrix<Scalar> dense() const {
    return DenseMatrix<Scalar>(diag_.asDiagonal());
  }

 private:
  DenseVector<Scalar> diag_;
};

// Unit upper triangular matrix. The unit diagonal and zero strict lower
// triangle are enforced on construction, so a valid object can only hold a
// valid factor.
template <typename Scalar>
class UnitUpper {
 public:
  UnitUpper() = default;

  static UnitUpper Identity(Index n) {
    UnitUpper u;
    u.m_ = DenseMatrix<Scalar>::Identity(n, n);
    return u;
  }

  // Builds the factor from the strictly upper part of `m`; diagonal and
  // lower entries of the input are ignored.
  static UnitUpper FromStrictUpper(const DenseMatrix<Scalar>& m) {
    detail::require(m.rows() == m.cols(), "shape error: square matrix required");
    UnitUpper u;
    u.m_ = DenseMatrix<Scalar>::Identity(m.rows(), m.cols());
    u.m_.template triangularView<Eigen::StrictlyUpper>() = m;
    return u;
  }

  Index dim() const { return m_.rows(); }
  const DenseMatrix<Scalar>& matrix() const { return m_; }
  Scalar operator()(Index i, Index j) const { return m_(i, j); }

 private:
  DenseMatrix<Scalar> m_;
};

// Factor pair (U, D) representing U·D·U^T.
template <typename Scalar>
struct UdFactors {
  UnitUpper<Scalar> u;
  DiagonalFactor<Scalar> d;

  Index dim() const { return u.dim(); }

  DenseMatrix<Scalar> reconstruct() const {
    return u.matrix() * d.diagonal().asDiagonal() * u.matrix().transpose();
  }
};

// Elementwise derivative of a factor pair with respect to one parameter:
// `u_prime` is strictly upper triangular (the unit diagonal is constant),
// `d_prime` holds the diagonal-entry derivatives.
template <typename Scalar>
struct FactorDerivative {
  DenseMatrix<Scalar> u_prime;
  DenseVector<Scalar> d_prime;

  static FactorDerivative Zero(Index n) {
    return {DenseMatrix<Scalar>::Zero(n, n), DenseVector<Scalar>::Zero(n)};
  }
};

// Additive split M = L + D + U into strictly lower, diagonal and strictly
// upper parts.
template <typename Scalar>
struct LduSplit {
  DenseMatrix<Scalar> strictly_lower;
  DenseVector<Scalar> diagonal;
  DenseMatrix<Scalar> strictly_upper;
};

template <typename Scalar>
LduSplit<Scalar> splitLdu(const DenseMatrix<Scalar>& m) {
  detail::require(m.rows() == m.cols(), "shape error: square matrix required");
  LduSplit<Scalar> out;
  out.strictly_lower = DenseMatrix<Scalar>::Zero(m.rows(), m.cols());
  out.strictly_lower.template triangularView<Eigen::StrictlyLower>() = m;
  out.diagonal = m.diagonal();
  out.strictly_upper = DenseMatrix<Scalar>::Zero(m.rows(), m.cols());
  out.strictly_upper.template triangularView<Eigen::StrictlyUpper>() = m;
  return out;
}

// Solves U·X = m by back substitution (U unit upper triangular).
template <typename Scalar, typename Rhs>
DenseMatrix<Scalar> solveUnitUpperLeft(const UnitUpper<Scalar>& u, const Rhs& m) {
  detail::require(u.dim() == m.rows(), "shape error: solve dimension mismatch");
  return u.matrix().template triangularView<Eigen::UnitUpper>().solve(m);
}

// Solves X·U^T = m by back substitution (U unit upper triangular).
template <typename Scalar, typename Rhs>
DenseMatrix<Scalar> solveUnitUpperRight(const Rhs& m, const UnitUpper<Scalar>& u) {
  detail::require(u.dim() == m.cols(), "shape error: solve dimension mismatch");
  DenseMatrix<Scalar> ut = u.matrix().transpose();
  return ut.template triangularView<Eigen::UnitLower>()
      .template solve<Eigen::OnTheRight>(m);
}

namespace detail {

template <typename Scalar>
void requireSymmetric(const DenseMatrix<Scalar>& s, Scalar tolerance) {
  if (s.size() == 0) return;
  const Scalar scale = s.template lpNorm<Eigen::Infinity>();
  const Scalar skew = (s - s.transpose()).template lpNorm<Eigen::Infinity>();
  if (skew > tolerance * std::max(Scalar(1), scale))
    throw FactorizationError("not symmetric");
}

template <typename Scalar>
bool isDiagonal(const DenseMatrix<Scalar>& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != Scalar(0)) return false;
  return true;
}

}  // namespace detail

// Modified Cholesky factorization S = U·D·U^T of a symmetric positive
// definite matrix. The input is symmetrized as (S + S^T)/2 after the
// symmetry check, so factorization always operates on an exactly symmetric
// working copy.
template <typename Scalar>
UdFactors<Scalar> modCholesky(const DenseMatrix<Scalar>& s,
                              Scalar symmetry_tolerance = Scalar(1e-10)) {
  detail::require(s.rows() == s.cols(), "shape error: square matrix required");
  detail::requireSymmetric(s, symmetry_tolerance);

  const Index n = s.rows();
  DenseMatrix<Scalar> w = ((s + s.transpose()) / Scalar(2)).eval();
  DenseMatrix<Scalar> u = DenseMatrix<Scalar>::Identity(n, n);
  DenseVector<Scalar> d(n);

  // Classic backward recursion: peel off the trailing column, then fold the
  // rank-one update into the leading principal submatrix.
  for (Index j = n - 1; j >= 0; --j) {
    const Scalar pivot = w(j, j);
    if (!(pivot > Scalar(0))) throw FactorizationError("not positive definite");
    d(j) = pivot;
    for (Index k = 0; k < j; ++k) {
      const Scalar beta = w(k, j);
      u(k, j) = beta / pivot;
      for (Index i = 0; i <= k; ++i) w(i, k) -= beta * u(i, j);
    }
  }
  return {UnitUpper<Scalar>::FromStrictUpper(u), DiagonalFactor<Scalar>(d)};
}

// Derivative of the factors of S = U·D·U^T with respect to a parameter,
// given the factors and the symmetric derivative S'. Writing
// Phi = U^{-1}·S'·U^{-T} and equating triangular parts of
// S' = U'·D·U^T + U·D'·U^T + U·D·U'^T yields
//   D' = diag(Phi),   U' = U·striu(Phi)·D^{-1}.
template <typename Scalar>
FactorDerivative<Scalar> modCholeskyDerivative(const UdFactors<Scalar>& f,
                                               const DenseMatrix<Scalar>& s_prime) {
  detail::require(s_prime.rows() == s_prime.cols() && s_prime.rows() == f.dim(),
                  "shape error: derivative dimension mismatch");
  const Index n = f.dim();
  for (Index i = 0; i < n; ++i)
    if (f.d(i) == Scalar(0)) throw FactorizationError("degenerate factorization");

  const DenseMatrix<Scalar> sym = ((s_prime + s_prime.transpose()) / Scalar(2)).eval();
  const DenseMatrix<Scalar> phi =
      solveUnitUpperRight(DenseMatrix<Scalar>(solveUnitUpperLeft(f.u, sym)), f.u);

  FactorDerivative<Scalar> out;
  out.d_prime = phi.diagonal();
  DenseMatrix<Scalar> striu = DenseMatrix<Scalar>::Zero(n, n);
  striu.template triangularView<Eigen::StrictlyUpper>() = phi;
  out.u_prime = f.u.matrix() * striu;
  out.u_prime.array().rowwise() /= f.d.diagonal().transpose().array();
  return out;
}

// Factors a covariance matrix, reading off diagonal inputs directly so that
// positive semidefinite diagonal covariances (e.g. a zero process noise
// block) are representable without a positive definite requirement.
template <typename Scalar>
UdFactors<Scalar> udFromCovariance(const DenseMatrix<Scalar>& s) {
  if (detail::isDiagonal(s))
    return {UnitUpper<Scalar>::Identity(s.rows()),
            DiagonalFactor<Scalar>(DenseVector<Scalar>(s.diagonal()))};
  return modCholesky(s);
}

// Factor derivative matching udFromCovariance: the diagonal shortcut has
// constant U = I, so only D varies.
template <typename Scalar>
FactorDerivative<Scalar> udDerivativeFromCovariance(const DenseMatrix<Scalar>& s,
                                                    const DenseMatrix<Scalar>& s_prime,
                                                    const UdFactors<Scalar>& f) {
  if (detail::isDiagonal(s) && detail::isDiagonal(s_prime))
    return {DenseMatrix<Scalar>::Zero(s.rows(), s.cols()),
            DenseVector<Scalar>(s_prime.diagonal())};
  return modCholeskyDerivative(f, s_prime);
}

}  // namespace udkf
