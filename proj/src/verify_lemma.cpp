// Worked-example verification: runs the static pre-array family at
// theta = 2 through the orthogonalization kernel and the derivative rule,
// prints every intermediate quantity, and compares each against embedded
// reference values known to four decimals.

#include "udkf/experiments.hpp"

#include "udkf/matrix_core.hpp"
#include "udkf/models.hpp"
#include "udkf/mwgs.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

namespace udkf::experiments {

namespace {

constexpr double kValueTolerance = 5e-5;   // the references carry 4 decimals
constexpr double kNormTolerance = 1e-10;

using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;

Matrix makeMatrix(Index rows, Index cols, std::initializer_list<double> values) {
  Matrix m(rows, cols);
  Index i = 0;
  for (double v : values) {
    m(i / cols, i % cols) = v;
    ++i;
  }
  return m;
}

void appendMatrix(std::ostringstream& out, const std::string& label,
                  const Matrix& m) {
  out << label << " =\n";
  char buffer[40];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buffer, sizeof(buffer), " %10.4f", m(i, j));
      out << buffer;
    }
    out << "\n";
  }
}

void appendDiagonal(std::ostringstream& out, const std::string& label,
                    const Vector& d) {
  out << label << " = diag(";
  char buffer[40];
  for (Index i = 0; i < d.size(); ++i) {
    std::snprintf(buffer, sizeof(buffer), "%.4f", d(i));
    out << (i ? ", " : "") << buffer;
  }
  out << ")\n";
}

double maxAbsDeviation(const Matrix& computed, const Matrix& reference) {
  return (computed - reference).cwiseAbs().maxCoeff();
}

}  // namespace

VerifyLemmaReport verifyLemma() {
  const double theta = 2.0;
  const PreArrays<double> pre = example1PreArrays(theta);
  const PreArrayDerivatives<double> pre_prime = example1PreArrayDerivatives(theta);
  const PostArrays<double> post = mwgsOrthogonalize(pre);

  // Intermediates of the derivative rule, recomputed here for display.
  const Matrix weighted_basis = pre.d_w.diagonal().asDiagonal() * post.basis;
  Matrix m0 = weighted_basis.transpose() * pre_prime.a_prime;
  m0 = solveUnitUpperRight(m0, post.u);
  const LduSplit<double> split0 = splitLdu(m0);
  const Matrix m2 =
      post.basis.transpose() * pre_prime.d_w_prime.asDiagonal() * post.basis;
  const LduSplit<double> split2 = splitLdu(m2);

  const PostArrayDerivatives<double> dpost = mwgsDerivative(pre, pre_prime, post);

  // Derivative consistency: both sides of the differentiated Gram identity.
  const Matrix gram_prime =
      pre_prime.a_prime.transpose() * pre.d_w.dense() * pre.a +
      pre.a.transpose() * Matrix(pre_prime.d_w_prime.asDiagonal()) * pre.a +
      pre.a.transpose() * pre.d_w.dense() * pre_prime.a_prime;
  const Matrix& u = post.u.matrix();
  const Matrix factored_prime =
      dpost.u_prime * post.d.dense() * u.transpose() +
      u * Matrix(dpost.d_prime.asDiagonal()) * u.transpose() +
      u * post.d.dense() * dpost.u_prime.transpose();
  const Matrix difference = gram_prime - factored_prime;
  const Eigen::SelfAdjointEigenSolver<Matrix> eigensolver(
      ((difference + difference.transpose()) / 2.0).eval());
  const double consistency_norm = eigensolver.eigenvalues().cwiseAbs().maxCoeff();

  // Reference values (4 decimals).
  const Matrix ref_a = makeMatrix(3, 2, {1.6, 2.0, 2.0, 2.6667, 1.3333, 2.0});
  const Vector ref_dw = (Vector(3) << 2.0, 4.0, 8.0).finished();
  const Matrix ref_a_prime = makeMatrix(3, 2, {4.0, 4.0, 4.0, 4.0, 2.0, 2.0});
  const Vector ref_dw_prime = (Vector(3) << 1.0, 4.0, 12.0).finished();
  const Matrix ref_u = makeMatrix(2, 2, {1.0, 0.7169, 0.0, 1.0});
  const Vector ref_d = (Vector(2) << 0.1672, 68.4444).finished();
  const Matrix ref_b =
      makeMatrix(3, 2, {0.1662, 2.0, 0.0883, 2.6667, -0.1004, 2.0});
  const Matrix ref_l0 = makeMatrix(2, 2, {0.0, 0.0, 25.6693, 0.0});
  const Vector ref_d0 = (Vector(2) << 0.3216, 90.6667).finished();
  const Matrix ref_u0 = makeMatrix(2, 2, {0.0, 1.1359, 0.0, 0.0});
  const Vector ref_d2 = (Vector(2) << 0.1799, 80.4444).finished();
  const Matrix ref_u2 = makeMatrix(2, 2, {0.0, -1.1359, 0.0, 0.0});
  const Matrix ref_u_prime = makeMatrix(2, 2, {0.0, 0.3750, 0.0, 0.0});
  const Vector ref_d_prime = (Vector(2) << 0.8231, 261.7778).finished();

  double max_dev = 0.0;
  auto check = [&max_dev](const Matrix& computed, const Matrix& reference) {
    max_dev = std::max(max_dev, maxAbsDeviation(computed, reference));
  };
  check(pre.a, ref_a);
  check(pre.d_w.diagonal(), ref_dw);
  check(pre_prime.a_prime, ref_a_prime);
  check(pre_prime.d_w_prime, ref_dw_prime);
  check(post.u.matrix(), ref_u);
  check(post.d.diagonal(), ref_d);
  check(post.basis, ref_b);
  check(split0.strictly_lower, ref_l0);
  check(split0.diagonal, ref_d0);
  check(split0.strictly_upper, ref_u0);
  check(split2.diagonal, ref_d2);
  check(split2.strictly_upper, ref_u2);
  check(dpost.u_prime, ref_u_prime);
  check(dpost.d_prime, ref_d_prime);

  VerifyLemmaReport report;
  report.max_deviation = max_dev;
  report.consistency_norm = consistency_norm;
  report.pass = max_dev <= kValueTolerance && consistency_norm <= kNormTolerance;

  std::ostringstream out;
  out << "worked-example check: orthogonalization-derivative rule (theta = 2)\n\n";
  out << "pre-arrays and their derivatives:\n";
  appendMatrix(out, "A", pre.a);
  appendDiagonal(out, "D_w", pre.d_w.diagonal());
  appendMatrix(out, "A'", pre_prime.a_prime);
  appendDiagonal(out, "D_w'", pre_prime.d_w_prime);
  out << "\npost-arrays:\n";
  appendMatrix(out, "U", post.u.matrix());
  appendDiagonal(out, "D_beta", post.d.diagonal());
  appendMatrix(out, "B", post.basis);
  out << "\nderivative-rule intermediates:\n";
  appendMatrix(out, "L0_bar", split0.strictly_lower);
  appendDiagonal(out, "D0", split0.diagonal);
  appendMatrix(out, "U0_bar", split0.strictly_upper);
  appendDiagonal(out, "D2", split2.diagonal);
  appendMatrix(out, "U2_bar", split2.strictly_upper);
  out << "\npost-array derivatives:\n";
  appendMatrix(out, "U'", dpost.u_prime);
  appendDiagonal(out, "D_beta'", dpost.d_prime);

  char line[160];
  std::snprintf(line, sizeof(line),
                "\nmax |computed - reference| = %.2e (tolerance %.1e)\n",
                max_dev, kValueTolerance);
  out << line;
  std::snprintf(line, sizeof(line),
                "consistency norm ||(A^T D_w A)' - (U D U^T)'||_2 = %.2e "
                "(tolerance %.1e)\n",
                consistency_norm, kNormTolerance);
  out << line;
  out << (report.pass ? "PASS\n" : "FAIL\n");
  report.text = out.str();
  return report;
}

}  // namespace udkf::experiments
