#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pim/maxent.hpp"

using namespace pim;
using Catch::Approx;

TEST_CASE("maxent on {0,1} recovers the bernoulli in natural form") {
  auto set = monomial_set(1);
  auto fit = fit_maxent(Support::finite({0.0, 1.0}), set, VectorXd::Constant(1, 0.3));
  REQUIRE(fit.converged);
  CHECK(fit.residual <= 1e-10);
  CHECK(fit.lambda[0] == Approx(std::log(0.3 / 0.7)).epsilon(1e-9));
  CHECK(fit.lambda0 == Approx(-std::log(0.7)).epsilon(1e-9));
}

TEST_CASE("maxent on the real line with two moments is gaussian") {
  auto set = monomial_set(2);
  SECTION("unit variance") {
    VectorXd mu(2);
    mu << 0.0, 1.0;
    auto fit = fit_maxent(Support::real_line(), set, mu);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.lambda[0]) < 1e-8);
    CHECK(fit.lambda[1] == Approx(-0.5).epsilon(1e-7));
    CHECK(fit.lambda0 == Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-7));
  }
  SECTION("laplace moments give the variance-2 gaussian") {
    VectorXd mu(2);
    mu << 0.0, 2.0;
    auto fit = fit_maxent(Support::real_line(), set, mu);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.lambda[0]) < 1e-8);
    CHECK(fit.lambda[1] == Approx(-0.25).epsilon(1e-7));
    CHECK(fit.lambda0 == Approx(0.5 * std::log(4.0 * M_PI)).epsilon(1e-7));
  }
}

TEST_CASE("maxent on the half line with the mean is exponential") {
  auto set = monomial_set(1);
  auto fit = fit_maxent(Support::half_line(), set, VectorXd::Constant(1, 0.5));
  REQUIRE(fit.converged);
  CHECK(fit.lambda[0] == Approx(-2.0).epsilon(1e-8));
  CHECK(fit.lambda0 == Approx(std::log(0.5)).epsilon(1e-7));
}

TEST_CASE("infeasible targets are rejected") {
  auto set = monomial_set(1);
  // Outside the moment polytope of {0,1}.
  CHECK_THROWS_AS(
      fit_maxent(Support::finite({0.0, 1.0}), set, VectorXd::Constant(1, 1.5)),
      Infeasible);
  // A lone odd moment cannot be normalized on the whole real line.
  CHECK_THROWS_AS(
      fit_maxent(Support::real_line(), set, VectorXd::Constant(1, 0.0)),
      Infeasible);
  CHECK_THROWS_AS(
      fit_maxent(Support::real_line(), monomial_set(2), VectorXd::Zero(3)),
      DimensionMismatch);
}

TEST_CASE("model fit: gaussian self-fit is exact and tight") {
  auto model = ModelSpec(Family::GaussianIid, Eigen::Vector2d(0.0, 1.0), 1);
  auto set = monomial_set(2);
  auto fit = fit_maxent_model(model, set, Support::real_line());
  REQUIRE(fit.converged);
  auto summary = analytic_moments(model, set);

  // Self-consistency: the fit hits the tightness condition d_lambda =
  // Sigma^{-1} G, so the misspecified information equals PIM equals FIM.
  CHECK(tight_condition_residual(fit, summary) < 1e-4);
  auto fstar = misspecified_fim(fit, summary.sigma);
  auto fim = analytic_fim(model);
  CHECK((fstar.matrix - fim.matrix).frobenius() < 1e-3);

  // Log-partition gradient identity: d lambda0 / d theta = d_lambda^T mu.
  for (Eigen::Index j = 0; j < 2; ++j)
    CHECK(fit.d_lambda0[j] ==
          Approx(fit.d_lambda.col(j).dot(summary.mu)).margin(1e-6));
}

TEST_CASE("model fit scales linearly in the number of observations") {
  auto m1 = ModelSpec(Family::GaussianIid, Eigen::Vector2d(0.0, 1.0), 1);
  auto m3 = m1.with_n_obs(3);
  auto set = monomial_set(2);
  auto f1 = fit_maxent_model(m1, set, Support::real_line());
  auto f3 = fit_maxent_model(m3, set, Support::real_line());
  CHECK((f3.lambda - 3.0 * f1.lambda).norm() < 1e-8);
  CHECK(f3.lambda0 == Approx(3.0 * f1.lambda0));
  CHECK((f3.d_lambda - 3.0 * f1.d_lambda).norm() < 1e-6);
  CHECK(f3.n_obs == 3);
}

TEST_CASE("laplace misspecification closed forms") {
  auto model = ModelSpec(Family::LaplaceIid, VectorXd::Constant(1, 0.0), 1);
  auto set = monomial_set(2);
  auto fit = fit_maxent_model(model, set, Support::real_line());
  REQUIRE(fit.converged);
  // The closest exponential family is the gaussian with variance 2.
  CHECK(std::abs(fit.lambda[0]) < 1e-7);
  CHECK(fit.lambda[1] == Approx(-0.25).epsilon(1e-6));
  // d lambda / d theta = (1/2, 0) at the center of symmetry.
  CHECK(fit.d_lambda(0, 0) == Approx(0.5).epsilon(1e-5));
  CHECK(std::abs(fit.d_lambda(1, 0)) < 1e-5);

  auto summary = analytic_moments(model, set);
  CHECK(summary.sigma(0, 0) == Approx(2.0));
  CHECK(summary.sigma(1, 1) == Approx(20.0));

  // F* = d_lambda^T Sigma d_lambda = 1/2, which matches the PIM exactly,
  // and sits strictly below the FIM 1/b^2 = 1.
  auto fstar = misspecified_fim(fit, summary.sigma);
  CHECK(fstar.matrix(0, 0) == Approx(0.5).epsilon(1e-4));
  auto b = pim_bound(summary, model.theta());
  CHECK(b.matrix(0, 0) == Approx(0.5));
  CHECK(tight_condition_residual(fit, summary) < 1e-4);

  // At tightness the cross term vanishes in expectation.
  auto ct = cross_term(fit, model, set, 100000, 5);
  CHECK(std::abs(ct.matrix(0, 0)) <=
        4.0 * ct.stderr_matrix(0, 0) + 1e-4);
}

TEST_CASE("bound chain: F* + F~ <= PIM <= FIM") {
  SECTION("gaussian, fully tight") {
    auto model = ModelSpec(Family::GaussianIid, Eigen::Vector2d(0.0, 1.0), 1);
    auto rep = bound_chain_check(model, monomial_set(2), Support::real_line());
    CHECK(rep.chain_holds);
    REQUIRE(rep.fim.has_value());
    CHECK((rep.pim.matrix - rep.fim->matrix).frobenius() < 1e-10);
    CHECK(rep.tight_residual < 1e-4);
    CHECK(rep.gap_identity_residual <= rep.error_budget);
  }
  SECTION("laplace, strict PIM-FIM gap") {
    auto model = ModelSpec(Family::LaplaceIid, VectorXd::Constant(1, 0.0), 1);
    auto rep = bound_chain_check(model, monomial_set(2), Support::real_line());
    CHECK(rep.chain_holds);
    REQUIRE(rep.fim.has_value());
    CHECK(rep.fim->matrix(0, 0) == Approx(1.0));
    CHECK(rep.pim.matrix(0, 0) == Approx(0.5));
    CHECK(rep.chain_min_eig_fim == Approx(0.5).epsilon(1e-6));
    CHECK(rep.gap_identity_residual <= rep.error_budget);
  }
  SECTION("bernoulli on its finite support") {
    auto model = ModelSpec(Family::BernoulliIid, VectorXd::Constant(1, 0.3), 1);
    auto rep = bound_chain_check(model, monomial_set(1),
                                 default_support(Family::BernoulliIid));
    CHECK(rep.chain_holds);
    REQUIRE(rep.fim.has_value());
    CHECK(rep.fim->matrix(0, 0) == Approx(1.0 / 0.21));
    CHECK((rep.pim.matrix - rep.fim->matrix).frobenius() < 1e-8);
    CHECK(rep.f_star.matrix(0, 0) == Approx(1.0 / 0.21).epsilon(1e-4));
  }
  SECTION("exponential on the half line") {
    auto model = ModelSpec(Family::ExponentialIid, VectorXd::Constant(1, 2.0), 1);
    auto rep = bound_chain_check(model, monomial_set(1),
                                 default_support(Family::ExponentialIid));
    CHECK(rep.chain_holds);
    CHECK(rep.pim.matrix(0, 0) == Approx(0.25));
    CHECK(rep.tight_residual < 1e-3);
  }
}

TEST_CASE("default_support per family") {
  CHECK(default_support(Family::BernoulliIid).kind == Support::Kind::FinitePoints);
  CHECK(default_support(Family::ExponentialIid).kind == Support::Kind::HalfLine);
  CHECK(default_support(Family::GaussianIid).kind == Support::Kind::RealLine);
  CHECK(default_support(Family::LaplaceIid).kind == Support::Kind::RealLine);
}
