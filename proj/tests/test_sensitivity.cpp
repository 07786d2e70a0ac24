#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "udkf/baseline_kf.hpp"
#include "udkf/models.hpp"
#include "udkf/sensitivity.hpp"

#include <cmath>
#include <string>
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

// Reconstructs the dense covariance derivative from factor derivatives:
// P' = U'·D·U^T + U·D'·U^T + U·D·U'^T.
DenseMatrix<double> densePPrime(const udkf::UdFactors<double>& p,
                                const udkf::FactorDerivative<double>& dp) {
  const DenseMatrix<double>& u = p.u.matrix();
  const DenseMatrix<double> d = p.d.dense();
  return dp.u_prime * d * u.transpose() +
         u * DenseMatrix<double>(dp.d_prime.asDiagonal()) * u.transpose() +
         u * d * dp.u_prime.transpose();
}

double centralFdLoglik(const udkf::ParametricModel<double>& model, double theta,
                       double h,
                       const std::vector<DenseVector<double>>& measurements) {
  const auto run = [&](double t) {
    const auto mats = model.at(theta1(t));
    const auto deriv = model.derivativesAt(theta1(t));
    return udkf::runExtendedFilter(mats, deriv, measurements).loglik;
  };
  return (run(theta + h) - run(theta - h)) / (2 * h);
}

}  // namespace

TEST_CASE("a parameter-independent model has identically zero sensitivities") {
  const auto model = udkf::constantModel<double>();
  const auto traj = udkf::simulate(model, theta1(0.0), 30, 7u);
  const auto mats = model.at(theta1(0.0));
  const auto deriv = model.derivativesAt(theta1(0.0));

  const auto run = udkf::runExtendedFilter(mats, deriv, traj.measurements);
  CHECK(run.gradient(0) == 0.0);
  CHECK(run.final_sensitivity.x_prime[0].isZero(0.0));
  CHECK(run.final_sensitivity.p_prime[0].u_prime.isZero(0.0));
  CHECK(run.final_sensitivity.p_prime[0].d_prime.isZero(0.0));
}

TEST_CASE("step sensitivity splits the post-array derivative blocks") {
  // The static worked family is shaped exactly like a one-state/one-output
  // step pre-array (q = n = m = 1), so its derivative blocks place the gain
  // derivative at the known off-diagonal value.
  const auto pre = udkf::example1PreArrays(2.0);
  const auto prime = udkf::example1PreArrayDerivatives(2.0);
  const auto post = udkf::mwgsOrthogonalize(pre);

  const auto sens = udkf::propagateStepSensitivities(pre, prime, post, 1, 1);
  CHECK(std::abs(sens.gain_prime(0, 0) - 0.3750) <= 5e-5);
  CHECK(std::abs(sens.d_p_prime(0) - 0.8231) <= 5e-5);
  CHECK(std::abs(sens.d_innov_prime(0) - 261.7778) <= 5e-5);
  CHECK(sens.u_p_prime(0, 0) == 0.0);
  CHECK(sens.u_innov_prime(0, 0) == 0.0);
}

TEST_CASE("innovation sensitivity solves the differentiated triangular system") {
  udkf::StepOutput<double> out;
  out.u_innov = udkf::UnitUpper<double>::Identity(1);
  out.d_innov = udkf::DiagonalFactor<double>(DenseVector<double>::Constant(1, 2.0));
  out.innovation = DenseVector<double>::Constant(1, 3.0);
  out.normalized_innovation = out.innovation;

  DenseMatrix<double> h(1, 2), h_prime(1, 2);
  h << 1, 0;
  h_prime << 0.5, 0;
  DenseVector<double> x(2), x_prime(2);
  x << 2, 0;
  x_prime << 0.25, 0;
  DenseMatrix<double> u_innov_prime = DenseMatrix<double>::Zero(1, 1);

  const auto [e_prime, e_bar_prime] =
      udkf::innovationSensitivity(out, u_innov_prime, h, h_prime, x, x_prime);
  // e' = -H'x - H·x' = -(0.5·2) - 0.25 = -1.25; with U_e = I, ē' = e'.
  CHECK(e_prime(0) == doctest::Approx(-1.25));
  CHECK(e_bar_prime(0) == doctest::Approx(-1.25));
}

TEST_CASE("gradient term matches the closed form") {
  udkf::StepOutput<double> out;
  out.u_innov = udkf::UnitUpper<double>::Identity(1);
  out.d_innov = udkf::DiagonalFactor<double>(DenseVector<double>::Constant(1, 1.0));
  out.normalized_innovation = DenseVector<double>::Zero(1);

  // With d = 1, ē = 0, d' = 1, ē' = 0: the trace term alone contributes,
  // and the step gradient is -1/2.
  const DenseVector<double> d_prime = DenseVector<double>::Constant(1, 1.0);
  const DenseVector<double> e_bar_prime = DenseVector<double>::Zero(1);
  CHECK(udkf::gradientTerm(out, d_prime, e_bar_prime) == doctest::Approx(-0.5));
}

TEST_CASE("filter gradient matches finite differences on the ill-conditioned model") {
  const auto model = udkf::illcondModel<double>(0.1);
  const double theta = 7.0;
  const auto traj = udkf::simulate(model, theta1(theta), 20, 31u);

  const auto mats = model.at(theta1(theta));
  const auto deriv = model.derivativesAt(theta1(theta));
  const auto run = udkf::runExtendedFilter(mats, deriv, traj.measurements);

  const double fd = centralFdLoglik(model, theta, 1e-4, traj.measurements);
  CHECK(std::abs(run.gradient(0) - fd) <= 1e-5 * (1.0 + std::abs(fd)));
}

TEST_CASE("filter gradient matches finite differences on the INS model") {
  const auto model = udkf::insModel<double>();
  const double gamma = 2e-4;
  const auto traj = udkf::simulate(model, theta1(gamma), 50, 17u);

  const auto mats = model.at(theta1(gamma));
  const auto deriv = model.derivativesAt(theta1(gamma));
  const auto run = udkf::runExtendedFilter(mats, deriv, traj.measurements);

  const double fd = centralFdLoglik(model, gamma, 1e-4 * gamma, traj.measurements);
  CHECK(std::abs(run.gradient(0) - fd) <= 1e-5 * (1.0 + std::abs(fd)));
}

TEST_CASE("factored sensitivities agree with the differentiated conventional filter") {
  const auto model = udkf::illcondModel<double>(0.1);
  const double theta = 7.0;
  const auto traj = udkf::simulate(model, theta1(theta), 30, 41u);

  const auto mats = model.at(theta1(theta));
  const auto deriv = model.derivativesAt(theta1(theta));

  const auto ud_run = udkf::runExtendedFilter(mats, deriv, traj.measurements);
  const auto conv_run = udkf::runDiffKf(mats, deriv, traj.measurements);

  CHECK(std::abs(ud_run.loglik - conv_run.loglik) <=
        1e-8 * (1.0 + std::abs(conv_run.loglik)));
  CHECK(std::abs(ud_run.gradient(0) - conv_run.gradient(0)) <=
        1e-8 * (1.0 + std::abs(conv_run.gradient(0))));
  CHECK((ud_run.final_state.x - conv_run.final_state.x).lpNorm<Eigen::Infinity>() <=
        1e-8 * (1.0 + conv_run.final_state.x.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("state-by-state sensitivities track the conventional recursion") {
  const auto model = udkf::insModel<double>();
  const double gamma = 2e-4;
  const auto traj = udkf::simulate(model, theta1(gamma), 25, 53u);

  const auto mats = model.at(theta1(gamma));
  const auto deriv = model.derivativesAt(theta1(gamma));

  udkf::ConvFilterState<double> conv = udkf::initialConvState(mats, 1);
  std::vector<DenseVector<double>> conv_x_primes;
  std::vector<DenseMatrix<double>> conv_p_primes;
  for (const auto& z : traj.measurements) {
    auto [next, out] = udkf::diffKfStep(mats, deriv, conv, z);
    conv = std::move(next);
    conv_x_primes.push_back(conv.x_prime[0]);
    conv_p_primes.push_back(conv.p_prime[0]);
  }

  std::size_t step = 0;
  udkf::StepObserver<double> observer =
      [&](Index k, const udkf::FilterState<double>& state,
          const udkf::SensitivityState<double>& sens, double) {
        const auto idx = static_cast<std::size_t>(k);
        CHECK((sens.x_prime[0] - conv_x_primes[idx]).lpNorm<Eigen::Infinity>() <=
              1e-8 * (1.0 + conv_x_primes[idx].lpNorm<Eigen::Infinity>()));

        const DenseMatrix<double> p_prime =
            densePPrime(state.p, sens.p_prime[0]);
        CHECK((p_prime - conv_p_primes[idx]).lpNorm<Eigen::Infinity>() <=
              1e-8 * (1.0 + conv_p_primes[idx].lpNorm<Eigen::Infinity>()));
        // Recombined covariance derivatives are symmetric.
        CHECK((p_prime - p_prime.transpose()).lpNorm<Eigen::Infinity>() <= 1e-11);
        ++step;
      };
  udkf::runExtendedFilter(mats, deriv, traj.measurements, observer);
  CHECK(step == traj.measurements.size());
}

TEST_CASE("filter failures carry the breaking step index") {
  // A zero measurement-noise diagonal puts a zero weight into the step
  // pre-array, which the orthogonalization rejects at the first step.
  auto mats = udkf::constantModel<double>().at(theta1(0.0));
  mats.r.setZero();
  mats.factorize();
  const auto deriv = udkf::zeroSystemDerivatives(mats, 1);

  std::vector<DenseVector<double>> zs(3, DenseVector<double>::Zero(1));
  try {
    udkf::runExtendedFilter(mats, deriv, zs);
    FAIL("expected an evaluation error");
  } catch (const udkf::EvaluationError& e) {
    CHECK(e.step() == 0);
    CHECK(std::string(e.what()) ==
          "degenerate weight: nonpositive diagonal entry (at step 0)");
  }
}
