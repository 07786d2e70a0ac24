#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "udkf/mle.hpp"
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

udkf::Objective<double> illcondObjective(double delta, double theta_star,
                                         Index n_steps, unsigned seed,
                                         udkf::Engine engine) {
  udkf::Objective<double> obj;
  obj.model = udkf::illcondModel<double>(delta);
  obj.measurements =
      udkf::simulate(obj.model, theta1(theta_star), n_steps, seed).measurements;
  obj.engine = engine;
  return obj;
}

}  // namespace

TEST_CASE("the minimizer solves a separable quadratic") {
  DenseVector<double> target(3);
  target << 1.0, -2.0, 0.5;
  DenseVector<double> weights(3);
  weights << 1.0, 4.0, 0.25;

  udkf::ObjectiveFn<double> fn = [&](const DenseVector<double>& x, double& value,
                                     DenseVector<double>& grad) {
    const DenseVector<double> r = x - target;
    value = 0.5 * (weights.array() * r.array().square()).sum();
    grad = weights.array() * r.array();
    return true;
  };

  const DenseVector<double> x0 = DenseVector<double>::Zero(3);
  const auto result = udkf::minimizeFunction(fn, x0);
  CHECK(result.converged);
  CHECK(result.failure_reason.empty());
  CHECK((result.theta_hat - target).lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK(result.neg_loglik <= 1e-10);
}

TEST_CASE("the minimizer handles curved valleys") {
  udkf::ObjectiveFn<double> fn = [](const DenseVector<double>& x, double& value,
                                    DenseVector<double>& grad) {
    const double a = x(0), b = x(1);
    value = 100.0 * (b - a * a) * (b - a * a) + (1.0 - a) * (1.0 - a);
    grad.resize(2);
    grad(0) = -400.0 * a * (b - a * a) - 2.0 * (1.0 - a);
    grad(1) = 200.0 * (b - a * a);
    return true;
  };

  DenseVector<double> x0(2);
  x0 << -1.2, 1.0;
  udkf::MinimizeOptions opts;
  opts.max_iterations = 500;
  const auto result = udkf::minimizeFunction(fn, x0, opts);
  CHECK(result.converged);
  CHECK(std::abs(result.theta_hat(0) - 1.0) <= 1e-6);
  CHECK(std::abs(result.theta_hat(1) - 1.0) <= 1e-6);
}

TEST_CASE("an unevaluable starting point aborts with a reason") {
  udkf::ObjectiveFn<double> fn = [](const DenseVector<double>&, double&,
                                    DenseVector<double>&) { return false; };
  const DenseVector<double> x0 = DenseVector<double>::Ones(1);
  const auto result = udkf::minimizeFunction(fn, x0);
  CHECK_FALSE(result.converged);
  CHECK(result.failure_reason == "objective evaluation failed at the initial point");
}

TEST_CASE("objective evaluation pairs likelihood and gradient") {
  const auto obj =
      illcondObjective(0.1, 7.0, 30, 5u, udkf::Engine::kUd);

  const auto v = udkf::evaluate(obj, theta1(7.0));
  const double h = 1e-4;
  const auto vp = udkf::evaluate(obj, theta1(7.0 + h));
  const auto vm = udkf::evaluate(obj, theta1(7.0 - h));
  const double fd = (vp.neg_loglik - vm.neg_loglik) / (2 * h);
  CHECK(std::abs(v.neg_gradient(0) - fd) <= 1e-6 * (1.0 + std::abs(fd)));

  udkf::Objective<double> conv = obj;
  conv.engine = udkf::Engine::kConventionalDiff;
  const auto w = udkf::evaluate(conv, theta1(7.0));
  CHECK(std::abs(v.neg_loglik - w.neg_loglik) <= 1e-8 * (1.0 + std::abs(v.neg_loglik)));
  CHECK(std::abs(v.neg_gradient(0) - w.neg_gradient(0)) <=
        1e-8 * (1.0 + std::abs(v.neg_gradient(0))));
}

TEST_CASE("a parameter-independent objective converges immediately") {
  udkf::Objective<double> obj;
  obj.model = udkf::constantModel<double>();
  obj.measurements =
      udkf::simulate(obj.model, theta1(0.0), 20, 8u).measurements;

  const auto v = udkf::evaluate(obj, theta1(0.0));
  CHECK(v.neg_gradient(0) == 0.0);

  const auto result = udkf::minimize(obj, theta1(0.25));
  CHECK(result.converged);
  CHECK(result.iterations == 0);
  CHECK(result.theta_hat(0) == 0.25);
}

TEST_CASE("both engines estimate the same parameter on a well-conditioned record") {
  const auto ud_obj = illcondObjective(0.1, 7.0, 60, 101u, udkf::Engine::kUd);
  udkf::Objective<double> conv_obj = ud_obj;
  conv_obj.engine = udkf::Engine::kConventionalDiff;

  const auto ud = udkf::minimize(ud_obj, theta1(1.0));
  const auto conv = udkf::minimize(conv_obj, theta1(1.0));

  CHECK(ud.converged);
  CHECK(conv.converged);
  CHECK(ud.theta_hat(0) > 0.0);
  CHECK(std::abs(ud.theta_hat(0) - conv.theta_hat(0)) <=
        1e-6 * (1.0 + std::abs(ud.theta_hat(0))));

  // The optimizer must not end above its own starting value.
  const auto v0 = udkf::evaluate(ud_obj, theta1(1.0));
  CHECK(ud.neg_loglik <= v0.neg_loglik);

  // With N = 60 highly informative measurements the estimate lands near the
  // generating value.
  CHECK(ud.theta_hat(0) == doctest::Approx(7.0).epsilon(0.5));
}

TEST_CASE("positivity constraints reject nonpositive starts") {
  const auto obj = illcondObjective(0.1, 7.0, 10, 3u, udkf::Engine::kUd);
  CHECK_THROWS_WITH_AS(udkf::minimize(obj, theta1(0.0)), "parameter out of domain",
                       udkf::DomainError);
  CHECK_THROWS_WITH_AS(udkf::minimize(obj, theta1(-2.0)), "parameter out of domain",
                       udkf::DomainError);
}

TEST_CASE("scan evaluates the grid and locates minimum and gradient crossing") {
  const auto obj = illcondObjective(0.1, 7.0, 60, 101u, udkf::Engine::kUd);

  std::vector<double> grid;
  for (double t = 4.0; t <= 10.0 + 1e-9; t += 0.5) grid.push_back(t);
  const auto result = udkf::scan(obj, grid);

  REQUIRE(result.rows.size() == grid.size());
  for (const auto& row : result.rows) CHECK(row.ok);
  REQUIRE(result.argmin_index >= 0);
  // The neg-log-likelihood gradient crosses zero around the minimum.
  REQUIRE(result.crossing_index >= 0);
  CHECK(result.sign_changes >= 1);
  const auto ci = static_cast<std::size_t>(result.crossing_index);
  CHECK(result.rows[ci].neg_gradient * result.rows[ci + 1].neg_gradient < 0.0);

  // The argmin grid point brackets the same region as the optimizer's answer.
  const auto est = udkf::minimize(obj, theta1(1.0));
  const double argmin_theta =
      result.rows[static_cast<std::size_t>(result.argmin_index)].theta;
  CHECK(std::abs(argmin_theta - est.theta_hat(0)) <= 0.5 + 1e-12);
}

TEST_CASE("scan records per-point failures without aborting") {
  const auto obj = illcondObjective(0.1, 7.0, 10, 3u, udkf::Engine::kUd);
  // theta = 0 zeroes the measurement-noise covariance, which the filter
  // rejects as a degenerate weight on the first step.
  const std::vector<double> grid = {0.0, 7.0};
  const auto result = udkf::scan(obj, grid);
  REQUIRE(result.rows.size() == 2);
  CHECK_FALSE(result.rows[0].ok);
  CHECK(result.rows[0].error ==
        "degenerate weight: nonpositive diagonal entry (at step 0)");
  CHECK(result.rows[1].ok);
  CHECK(result.argmin_index == 1);
}

TEST_CASE("scan input validation") {
  const auto obj = illcondObjective(0.1, 7.0, 5, 3u, udkf::Engine::kUd);
  CHECK_THROWS_WITH_AS(udkf::scan(obj, std::vector<double>{}),
                       "shape error: empty scan grid", udkf::ShapeError);

  const auto single = udkf::scan(obj, std::vector<double>{7.0});
  CHECK(single.rows.size() == 1);
  CHECK(single.argmin_index == 0);
  CHECK(single.crossing_index == -1);
  CHECK(single.sign_changes == 0);
}
