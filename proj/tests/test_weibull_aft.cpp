#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cct/numeric.hpp"
#include "cct/rng.hpp"
#include "cct/weibull_aft.hpp"

using namespace cct;

namespace {

AftParams make_params(std::initializer_list<double> coefs, double log_scale) {
  AftParams p;
  p.coefficients = Eigen::Map<const Eigen::VectorXd>(coefs.begin(),
                                                     static_cast<int>(coefs.size()));
  p.log_scale = log_scale;
  return p;
}

}  // namespace

TEST_CASE("fit_aft: exponential data recovers rate via closed form") {
  Rng rng(11);
  const int n = 10000;
  const double rate = 0.7;
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t[i] = -std::log(rng.uniform()) / rate;
  Eigen::VectorXi status = Eigen::VectorXi::Ones(n);
  Eigen::MatrixXd reg = Eigen::MatrixXd::Ones(n, 1);
  const AftFit fit = fit_aft(t, status, reg);
  // Exponential MLE: scale = sample mean, shape = 1.
  const double sample_mean = t.mean();
  CHECK(fit.converged);
  CHECK(fit.params.coefficients[0] == doctest::Approx(std::log(sample_mean)).epsilon(0.02));
  // shape = exp(-log_scale) -> 1 within sampling error (3 SE ~ 0.03 at n = 1e4)
  CHECK(std::abs(std::exp(-fit.params.log_scale) - 1.0) < 0.05);
}

TEST_CASE("fit_aft: identical uncensored times are degenerate") {
  Eigen::VectorXd t = Eigen::VectorXd::Constant(50, 2.0);
  Eigen::VectorXi status = Eigen::VectorXi::Ones(50);
  Eigen::MatrixXd reg = Eigen::MatrixXd::Ones(50, 1);
  CHECK_THROWS_AS(fit_aft(t, status, reg), NonConvergence);
}

TEST_CASE("fit_aft: recovers simulated Weibull regression parameters") {
  // scale exp(0.1 + 0.1 z), gumbel sigma 0.5, n = 10000, no censoring
  Rng rng(2024);
  const int n = 10000;
  Eigen::VectorXd t(n);
  Eigen::MatrixXd reg(n, 2);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    reg(i, 0) = 1.0;
    reg(i, 1) = z;
    t[i] = rng.weibull(std::exp(0.1 + 0.1 * z), 0.5);
  }
  const AftFit fit = fit_aft(t, Eigen::VectorXi::Ones(n), reg);
  CHECK(fit.converged);
  const Eigen::VectorXd se = fit.covariance.diagonal().cwiseSqrt();
  CHECK(std::abs(fit.params.coefficients[0] - 0.1) < 3.0 * se[0]);
  CHECK(std::abs(fit.params.coefficients[1] - 0.1) < 3.0 * se[1]);
  CHECK(std::abs(fit.params.log_scale - std::log(0.5)) < 3.0 * se[2]);
}

TEST_CASE("fit_aft: all-censored guard") {
  Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(20, 1.0, 2.0);
  Eigen::VectorXi status = Eigen::VectorXi::Zero(20);
  status.head(3).setOnes();  // below the 5-event floor
  Eigen::MatrixXd reg = Eigen::MatrixXd::Ones(20, 1);
  CHECK_THROWS_AS(fit_aft(t, status, reg), AllCensored);
}

TEST_CASE("fit_aft: rank-deficient design reported") {
  Rng rng(5);
  const int n = 60;
  Eigen::VectorXd t(n);
  Eigen::MatrixXd reg(n, 3);
  for (int i = 0; i < n; ++i) {
    t[i] = rng.weibull(1.0, 1.0);
    reg(i, 0) = 1.0;
    reg(i, 1) = rng.normal();
    reg(i, 2) = 2.0 * reg(i, 1);  // collinear
  }
  CHECK_THROWS_AS(fit_aft(t, Eigen::VectorXi::Ones(n), reg), DegenerateDesign);
}

TEST_CASE("fit_aft: time-rescaling equivariance") {
  Rng rng(99);
  const int n = 800;
  Eigen::VectorXd t(n);
  Eigen::VectorXi status(n);
  Eigen::MatrixXd reg(n, 2);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    reg(i, 0) = 1.0;
    reg(i, 1) = z;
    const double x = rng.weibull(std::exp(0.2 + 0.3 * z), 0.8);
    const double c = rng.weibull(1.5, 0.8);
    t[i] = std::min(x, c);
    status[i] = x <= c;
  }
  const AftFit base = fit_aft(t, status, reg);
  const double k = 7.5;
  const AftFit scaled = fit_aft((t * k).eval(), status, reg);
  CHECK(scaled.params.coefficients[0] ==
        doctest::Approx(base.params.coefficients[0] + std::log(k)).epsilon(1e-6));
  CHECK(scaled.params.coefficients[1] ==
        doctest::Approx(base.params.coefficients[1]).epsilon(1e-6));
  CHECK(scaled.params.log_scale == doctest::Approx(base.params.log_scale).epsilon(1e-6));
}

TEST_CASE("survival_prob: limits and unit Weibull value") {
  const AftParams p = make_params({0.0}, 0.0);
  Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
  CHECK(survival_prob(1e-12, row, p) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(survival_prob(1.0, row, p) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  // strictly decreasing in t
  double prev = 1.0;
  for (double t = 0.1; t < 30.0; t *= 1.7) {
    const double s = survival_prob(t, row, p);
    CHECK(s < prev);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    prev = s;
  }
}

TEST_CASE("survival_prob: matches quadrature of the density") {
  Rng rng(31);
  const QuadratureRule rule = QuadratureRule::semi_infinite();
  for (int trial = 0; trial < 100; ++trial) {
    const AftParams p =
        make_params({rng.normal() * 0.5, rng.normal() * 0.3}, rng.normal() * 0.4);
    Eigen::VectorXd row(2);
    row << 1.0, rng.normal();
    const double t = 0.05 + 3.0 * rng.uniform();
    const double via_quad = integrate_lower_truncated(
        [&](double x) { return std::exp(log_density(x, row, p)); }, t, rule);
    CHECK(std::abs(via_quad - survival_prob(t, row, p)) < 1e-6);
  }
}

TEST_CASE("log_density: exponential point value and normalization") {
  const AftParams p = make_params({0.0}, 0.0);
  Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
  CHECK(log_density(1.0, row, p) == doctest::Approx(-1.0).epsilon(1e-12));
  const QuadratureRule rule = QuadratureRule::semi_infinite();
  const double mass = integrate_lower_truncated(
      [&](double x) { return std::exp(log_density(x, row, p)); }, 0.0, rule);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("log_density / survival_prob hazard identity") {
  const AftParams p = make_params({0.3, -0.2}, std::log(1.4));
  Eigen::VectorXd row(2);
  row << 1.0, 0.7;
  for (double t : {0.3, 1.0, 2.5}) {
    const double h = 1e-5 * t;
    const double dlogs =
        (std::log(survival_prob(t + h, row, p)) - std::log(survival_prob(t - h, row, p))) /
        (2.0 * h);
    const double hazard = std::exp(log_density(t, row, p)) / survival_prob(t, row, p);
    CHECK(std::abs(dlogs + hazard) < 1e-5 * std::max(1.0, hazard));
    CHECK(hazard >= 0.0);
  }
}

TEST_CASE("score_aft: zero at the fitted maximum") {
  Rng rng(123);
  const int n = 500;
  Eigen::VectorXd t(n);
  Eigen::VectorXi status(n);
  Eigen::MatrixXd reg(n, 2);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    reg(i, 0) = 1.0;
    reg(i, 1) = z;
    const double x = rng.weibull(std::exp(0.1 + 0.2 * z), 1.2);
    const double c = rng.weibull(2.0, 1.2);
    t[i] = std::min(x, c);
    status[i] = x <= c;
  }
  const AftFit fit = fit_aft(t, status, reg);
  CHECK(score_aft(t, status, reg, fit.params).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("score_aft: matches finite differences of the log-likelihood") {
  Rng rng(321);
  const int n = 60;
  Eigen::VectorXd t(n);
  Eigen::VectorXi status(n);
  Eigen::MatrixXd reg(n, 2);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    reg(i, 0) = 1.0;
    reg(i, 1) = z;
    t[i] = rng.weibull(std::exp(0.3 * z), 0.9);
    status[i] = rng.uniform() < 0.6;
  }
  for (int trial = 0; trial < 5; ++trial) {
    const AftParams p =
        make_params({0.2 * rng.normal(), 0.2 * rng.normal()}, 0.3 * rng.normal());
    const Eigen::VectorXd analytic = score_aft(t, status, reg, p);
    auto ll = [&](const Eigen::VectorXd& v) {
      return Eigen::VectorXd::Constant(
                 1, aft_loglik(t, status, reg, AftParams::from_vector(v)))
          .eval();
    };
    const Eigen::MatrixXd numeric = finite_diff_jacobian(ll, p.to_vector(), 1e-6);
    for (int j = 0; j < analytic.size(); ++j)
      CHECK(std::abs(analytic[j] - numeric(0, j)) <
            1e-5 * std::max(1.0, std::abs(analytic[j])));
  }
}

TEST_CASE("score_aft: single uncensored observation, hand-evaluated Gumbel score") {
  // One event at t with linear predictor m and gumbel sigma s:
  //   u = (log t - m) / s
  //   d/d coef_j   = -r_j (1 - e^u) / s
  //   d/d logsigma = -1 - u (1 - e^u)
  const double tval = 1.7, m0 = 0.4, mz = -0.3, zval = 0.8, s = 1.3;
  Eigen::VectorXd t = Eigen::VectorXd::Constant(1, tval);
  Eigen::VectorXi status = Eigen::VectorXi::Ones(1);
  Eigen::MatrixXd reg(1, 2);
  reg << 1.0, zval;
  const AftParams p = make_params({m0, mz}, std::log(s));
  const double u = (std::log(tval) - (m0 + mz * zval)) / s;
  const double eu = std::exp(u);
  const Eigen::VectorXd got = score_aft(t, status, reg, p);
  CHECK(got[0] == doctest::Approx(-(1.0 - eu) / s).epsilon(1e-12));
  CHECK(got[1] == doctest::Approx(-zval * (1.0 - eu) / s).epsilon(1e-12));
  CHECK(got[2] == doctest::Approx(-1.0 - u * (1.0 - eu)).epsilon(1e-12));
}

TEST_CASE("score_aft: mean zero at the truth (Fisher consistency smoke)") {
  Rng rng(777);
  const int n = 10000;
  const AftParams truth = make_params({0.1, 0.4}, std::log(0.8));
  Eigen::VectorXd t(n);
  Eigen::VectorXi status(n);
  Eigen::MatrixXd reg(n, 2);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    reg(i, 0) = 1.0;
    reg(i, 1) = z;
    const double x = rng.weibull(std::exp(0.1 + 0.4 * z), 0.8);
    const double c = rng.weibull(1.3, 1.0);
    t[i] = std::min(x, c);
    status[i] = x <= c;
  }
  const Eigen::MatrixXd rows = aft_score_rows(t, status, reg, truth);
  for (int j = 0; j < rows.cols(); ++j) {
    const double mean = rows.col(j).mean();
    const double sd = std::sqrt((rows.col(j).array() - mean).square().sum() / (n - 1));
    CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
  }
}
