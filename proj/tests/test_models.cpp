#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "udkf/models.hpp"

#include <cmath>
#include <vector>

using udkf::DenseMatrix;
using udkf::DenseVector;
using udkf::Index;

namespace {

DenseVector<double> theta1(double value) {
  DenseVector<double> theta(1);
  theta << value;
  return theta;
}

}  // namespace

TEST_CASE("static family arrays take their closed-form values") {
  const auto pre = udkf::example1PreArrays(2.0);
  DenseMatrix<double> a_ref(3, 2);
  a_ref << 32.0 / 20.0, 2.0, 2.0, 8.0 / 3.0, 8.0 / 6.0, 2.0;
  CHECK((pre.a - a_ref).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(pre.d_w(0) == 2.0);
  CHECK(pre.d_w(1) == 4.0);
  CHECK(pre.d_w(2) == 8.0);

  const auto prime = udkf::example1PreArrayDerivatives(2.0);
  DenseMatrix<double> ap_ref(3, 2);
  ap_ref << 4.0, 4.0, 4.0, 4.0, 2.0, 2.0;
  CHECK((prime.a_prime - ap_ref).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(prime.d_w_prime(0) == 1.0);
  CHECK(prime.d_w_prime(1) == 4.0);
  CHECK(prime.d_w_prime(2) == 12.0);

  // At theta = 1 every weight is one and the arrays are simple fractions.
  const auto pre1 = udkf::example1PreArrays(1.0);
  CHECK(pre1.a(0, 0) == doctest::Approx(1.0 / 20.0));
  CHECK(pre1.a(2, 1) == doctest::Approx(0.5));
  CHECK(pre1.d_w(2) == 1.0);

  CHECK_THROWS_WITH_AS(udkf::example1PreArrays(0.0), "degenerate weight",
                       udkf::DomainError);
  CHECK_THROWS_WITH_AS(udkf::example1PreArrayDerivatives(0.0), "degenerate weight",
                       udkf::DomainError);
}

TEST_CASE("INS model wires the constants into the documented entries") {
  const udkf::InsConstants c;
  const auto model = udkf::insModel<double>(c);
  CHECK(model.n == 4);
  CHECK(model.m == 1);
  CHECK(model.q == 1);
  CHECK(model.p == 1);
  CHECK(model.positive[0]);

  const double gamma = 2e-4;
  const auto mats = model.at(theta1(gamma));
  CHECK(mats.f(0, 0) == 1.0);
  CHECK(mats.f(0, 1) == doctest::Approx(-c.tau * c.g));
  CHECK(mats.f(0, 2) == c.tau);
  CHECK(mats.f(1, 0) == doctest::Approx(c.tau / c.a));
  CHECK(mats.f(1, 3) == c.tau);
  CHECK(mats.f(2, 2) == doctest::Approx(1.0 - gamma * c.tau));
  CHECK(mats.f(3, 3) == 1.0);
  CHECK(mats.g(2, 0) == doctest::Approx(c.h1 * std::sqrt(2.0 * gamma * c.tau)));
  CHECK(mats.h(0, 0) == 1.0);
  CHECK(mats.q(0, 0) == 1.0);
  CHECK(mats.r(0, 0) == 0.01);
  CHECK(mats.pi0 == DenseMatrix<double>::Identity(4, 4));

  const auto deriv = model.derivativesAt(theta1(gamma));
  CHECK(deriv.f[0](2, 2) == doctest::Approx(-c.tau));
  CHECK(deriv.g[0](2, 0) ==
        doctest::Approx(c.h1 * c.tau / std::sqrt(2.0 * gamma * c.tau)));
  // Every other derivative block vanishes.
  DenseMatrix<double> f_rest = deriv.f[0];
  f_rest(2, 2) = 0.0;
  CHECK(f_rest.isZero(0.0));
  CHECK(deriv.h[0].isZero(0.0));
  CHECK(deriv.q[0].isZero(0.0));
  CHECK(deriv.r[0].isZero(0.0));
  CHECK(deriv.pi0[0].isZero(0.0));

  CHECK_THROWS_WITH_AS(model.at(theta1(0.0)), "parameter out of domain",
                       udkf::DomainError);
  CHECK_THROWS_WITH_AS(model.at(theta1(-1.0)), "parameter out of domain",
                       udkf::DomainError);
  udkf::InsConstants bad = c;
  bad.tau = 0.0;
  CHECK_THROWS_WITH_AS(udkf::insModel<double>(bad), "parameter out of domain",
                       udkf::DomainError);
}

TEST_CASE("ill-conditioned family scales with delta and theta as specified") {
  const double delta = 1e-3, theta = 7.0;
  const auto model = udkf::illcondModel<double>(delta);
  const auto mats = model.at(theta1(theta));

  CHECK(mats.f == DenseMatrix<double>::Identity(3, 3));
  CHECK(mats.g.isZero(0.0));
  CHECK(mats.h(0, 2) == 1.0);
  CHECK(mats.h(1, 2) == 1.0 + delta);
  CHECK(mats.r(0, 0) == doctest::Approx(delta * delta * theta * theta));
  CHECK(mats.r(0, 1) == 0.0);
  CHECK(mats.pi0(1, 1) == doctest::Approx(theta * theta));

  // The diagonal covariances factor exactly (no dense Cholesky involved).
  CHECK(mats.r_ud.u.matrix() == DenseMatrix<double>::Identity(2, 2));
  CHECK(mats.pi0_ud.d(0) == doctest::Approx(49.0));

  const auto deriv = model.derivativesAt(theta1(theta));
  CHECK(deriv.r[0](0, 0) == doctest::Approx(2.0 * delta * delta * theta));
  CHECK(deriv.pi0[0](2, 2) == doctest::Approx(14.0));
  CHECK(deriv.r_ud[0].d_prime(1) == doctest::Approx(2.0 * delta * delta * theta));
  CHECK(deriv.pi0_ud[0].d_prime(0) == doctest::Approx(14.0));
  CHECK(deriv.f[0].isZero(0.0));

  CHECK_THROWS_WITH_AS(udkf::illcondModel<double>(0.0), "parameter out of domain",
                       udkf::DomainError);
  CHECK_THROWS_AS(model.at(DenseVector<double>::Zero(2)), udkf::ShapeError);
}

TEST_CASE("analytic model derivatives pass the finite-difference gate") {
  CHECK(udkf::checkModelDerivatives(udkf::illcondModel<double>(0.1), theta1(7.0)) <=
        1e-8);
  CHECK(udkf::checkModelDerivatives(udkf::constantModel<double>(), theta1(0.0)) <=
        1e-12);
  CHECK(udkf::checkModelDerivatives(udkf::insModel<double>(), theta1(0.3)) <= 1e-8);
  // Near the lower end of the interesting range the square-root noise gain
  // has strong curvature, so the centered difference itself carries more
  // truncation error; the gate is correspondingly looser.
  CHECK(udkf::checkModelDerivatives(udkf::insModel<double>(), theta1(2e-4)) <= 1e-5);
}

TEST_CASE("simulation is seed-deterministic") {
  const auto model = udkf::constantModel<double>();
  const auto a = udkf::simulate(model, theta1(0.0), 25, 12345u);
  const auto b = udkf::simulate(model, theta1(0.0), 25, 12345u);
  const auto c = udkf::simulate(model, theta1(0.0), 25, 54321u);

  REQUIRE(a.states.size() == 25);
  REQUIRE(a.measurements.size() == 25);
  CHECK(a.seed == 12345u);
  CHECK(a.theta_true(0) == 0.0);

  bool identical = true, differs = false;
  for (std::size_t k = 0; k < 25; ++k) {
    identical = identical && a.states[k] == b.states[k] &&
                a.measurements[k] == b.measurements[k];
    differs = differs || a.measurements[k] != c.measurements[k];
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("zero covariances simulate to the zero trajectory") {
  udkf::ParametricModel<double> model = udkf::constantModel<double>();
  const auto base_at = model.at;
  model.at = [base_at](const DenseVector<double>& theta) {
    auto mats = base_at(theta);
    mats.q.setZero();
    mats.r.setZero();
    mats.pi0.setZero();
    mats.factorize();
    return mats;
  };

  const auto traj = udkf::simulate(model, theta1(0.0), 10, 9u);
  for (const auto& x : traj.states) CHECK(x.isZero(0.0));
  for (const auto& z : traj.measurements) CHECK(z.isZero(0.0));
}

TEST_CASE("the normal sampler is reproducible and roughly standard") {
  udkf::GaussianSampler a(77u), b(77u);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

  udkf::GaussianSampler s(1u);
  const int n = 20000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = s.next();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) <= 6.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("simulated states follow the recursion exactly once noise is known") {
  // With zero process/measurement noise but a random start, the trajectory
  // is the deterministic propagation of x_0.
  udkf::ParametricModel<double> model = udkf::constantModel<double>();
  const auto base_at = model.at;
  model.at = [base_at](const DenseVector<double>& theta) {
    auto mats = base_at(theta);
    mats.q.setZero();
    mats.r.setZero();
    mats.factorize();
    return mats;
  };

  const auto traj = udkf::simulate(model, theta1(0.0), 8, 5u);
  const auto mats = model.at(theta1(0.0));
  DenseVector<double> x = traj.states[0];
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    if (k > 0) {
      x = mats.f * x;
      CHECK((traj.states[k] - x).lpNorm<Eigen::Infinity>() <= 1e-15);
    }
    CHECK((traj.measurements[k] - mats.h * traj.states[k])
              .lpNorm<Eigen::Infinity>() <= 1e-15);
  }
}
