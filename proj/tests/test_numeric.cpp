#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cct/numeric.hpp"
#include "cct/rng.hpp"

using namespace cct;

TEST_CASE("solver: scalar linear equation") {
  auto phi = [](const Eigen::VectorXd& t) {
    return Eigen::VectorXd::Constant(1, t[0] - 3.0).eval();
  };
  const Eigen::VectorXd root =
      solve_estimating_equation(phi, Eigen::VectorXd::Zero(1));
  CHECK(root[0] == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("solver: least-squares gradient matches the normal equations") {
  Rng rng(42);
  const int n = 200, p = 3;
  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd yv(n);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = rng.normal();
    design(i, 2) = rng.uniform();
    yv[i] = 0.5 + 2.0 * design(i, 1) - design(i, 2) + 0.3 * rng.normal();
  }
  // independent oracle: closed-form normal equations
  const Eigen::VectorXd expected =
      (design.transpose() * design).ldlt().solve(design.transpose() * yv);

  auto phi = [&](const Eigen::VectorXd& b) {
    return (design.transpose() * (yv - design * b)).eval();
  };
  const Eigen::VectorXd root = solve_estimating_equation(phi, Eigen::VectorXd::Zero(p));
  CHECK((root - expected).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("solver: two-dimensional analytic root") {
  auto phi = [](const Eigen::VectorXd& t) {
    Eigen::VectorXd v(2);
    v[0] = t[0] * t[0] - 4.0;
    v[1] = t[1] - 1.0;
    return v;
  };
  Eigen::VectorXd start(2);
  start << 1.0, 0.0;
  const Eigen::VectorXd root = solve_estimating_equation(phi, start);
  CHECK(root[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(root[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("solver: quadratic phi converges from distant starts") {
  // gradient of a positive-definite quadratic
  Eigen::Matrix2d h;
  h << 4.0, 1.0, 1.0, 2.0;
  Eigen::Vector2d target(1.5, -2.0);
  auto phi = [&](const Eigen::VectorXd& t) { return (h * (t - target)).eval(); };
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd start(2);
    start << 200.0 * (rng.uniform() - 0.5), 200.0 * (rng.uniform() - 0.5);
    const Eigen::VectorXd root = solve_estimating_equation(phi, start);
    CHECK((root - target).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("solver: singular Jacobian is reported") {
  auto phi = [](const Eigen::VectorXd& t) {
    Eigen::VectorXd v(2);
    v[0] = t[0] + t[1] - 1.0;
    v[1] = 2.0 * (t[0] + t[1]) - 2.0;
    return v;
  };
  CHECK_THROWS_AS(solve_estimating_equation(phi, Eigen::VectorXd::Zero(2)),
                  SingularJacobian);
}

TEST_CASE("quadrature: exponential and gamma normalizations") {
  const QuadratureRule rule = QuadratureRule::semi_infinite();
  CHECK(integrate_lower_truncated([](double x) { return std::exp(-x); }, 0.0, rule) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(integrate_lower_truncated([](double x) { return x * std::exp(-x); }, 0.0, rule) ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("quadrature: truncated Weibull survival") {
  const QuadratureRule rule = QuadratureRule::semi_infinite();
  auto density = [](double x) { return 2.0 * x * std::exp(-x * x); };  // shape 2, scale 1
  const double got = integrate_lower_truncated(density, 0.5, rule);
  CHECK(std::abs(got - std::exp(-0.25)) < 1e-6);
}

TEST_CASE("quadrature: normalized Weibull densities across shapes") {
  const QuadratureRule rule = QuadratureRule::semi_infinite();
  for (double shape : {0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    auto density = [shape](double x) {
      return shape * std::pow(x, shape - 1.0) * std::exp(-std::pow(x, shape));
    };
    const double got = integrate_lower_truncated(density, 0.0, rule);
    CHECK_MESSAGE(std::abs(got - 1.0) < 1e-6, "shape ", shape, " -> ", got);
  }
}

TEST_CASE("quadrature: doubling the node count is already converged") {
  auto g = [](double x) { return std::exp(-0.7 * x) * (1.0 + std::sin(x) * 0.2); };
  const double a = integrate_lower_truncated(g, 0.3, QuadratureRule::semi_infinite(128));
  const double b = integrate_lower_truncated(g, 0.3, QuadratureRule::semi_infinite(256));
  CHECK(std::abs(a - b) < 1e-8);
}

TEST_CASE("quadrature: non-finite integrand reported") {
  const QuadratureRule rule = QuadratureRule::semi_infinite(16);
  CHECK_THROWS_AS(
      integrate_lower_truncated([](double) { return std::nan(""); }, 0.0, rule),
      NonFinite);
}

TEST_CASE("finite differences: analytic Jacobian") {
  auto f = [](const Eigen::VectorXd& t) {
    Eigen::VectorXd v(2);
    v[0] = t[0] * t[0];
    v[1] = t[0] * t[1];
    return v;
  };
  Eigen::VectorXd at(2);
  at << 1.0, 2.0;
  const Eigen::MatrixXd jac = finite_diff_jacobian(f, at);
  CHECK(jac(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(jac(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(jac(1, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(jac(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("finite differences: identity map and affine exactness") {
  auto ident = [](const Eigen::VectorXd& t) { return t; };
  Eigen::VectorXd at(3);
  at << -4.0, 0.0, 11.0;
  const Eigen::MatrixXd jac = finite_diff_jacobian(ident, at);
  CHECK((jac - Eigen::MatrixXd::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-9);

  Eigen::MatrixXd a(2, 3);
  a << 1.0, -2.0, 0.5, 0.0, 3.0, 4.0;
  auto affine = [&](const Eigen::VectorXd& t) { return (a * t).eval(); };
  const Eigen::MatrixXd jac2 = finite_diff_jacobian(affine, at);
  CHECK((jac2 - a).lpNorm<Eigen::Infinity>() < 1e-8);
}
