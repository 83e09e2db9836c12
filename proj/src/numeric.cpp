#include "cct/numeric.hpp"

#include <cmath>

namespace cct {

namespace {

// Golub-Welsch for Gauss-Legendre on (-1,1), mapped to (0,1).
void gauss_legendre_01(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jac(k, k - 1) = b;
    jac(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  nodes.resize(n);
  weights.resize(n);
  for (int j = 0; j < n; ++j) {
    nodes[j] = 0.5 * (es.eigenvalues()[j] + 1.0);
    const double v0 = es.eigenvectors()(0, j);
    weights[j] = v0 * v0;  // sums to 1 on (0,1)
  }
}

}  // namespace

QuadratureRule QuadratureRule::legendre(int n) {
  QuadratureRule r;
  gauss_legendre_01(n, r.nodes, r.weights);
  r.kind = Kind::legendre;
  return r;
}

QuadratureRule QuadratureRule::semi_infinite(int n) {
  QuadratureRule r;
  gauss_legendre_01(n, r.nodes, r.weights);
  r.kind = Kind::semi_infinite;
  return r;
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

Eigen::MatrixXd finite_diff_jacobian(const VectorFn& f, const Eigen::VectorXd& at,
                                     double fd_step) {
  const Eigen::VectorXd f0 = f(at);
  Eigen::MatrixXd jac(f0.size(), at.size());
  for (int j = 0; j < at.size(); ++j) {
    const double h = fd_step * std::max(1.0, std::abs(at[j]));
    Eigen::VectorXd hi = at, lo = at;
    hi[j] += h;
    lo[j] -= h;
    jac.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  if (!jac.allFinite()) throw NonFinite("finite_diff_jacobian: non-finite entries");
  return jac;
}

Eigen::VectorXd solve_estimating_equation(const VectorFn& phi,
                                          const Eigen::VectorXd& start,
                                          const SolverConfig& config) {
  Eigen::VectorXd theta = start;
  if (!theta.allFinite()) throw NonFinite("solver: start is not finite");
  Eigen::VectorXd f = phi(theta);
  double resid = f.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < config.max_iterations; ++it) {
    if (resid <= config.tolerance) return theta;
    const Eigen::MatrixXd jac = finite_diff_jacobian(phi, theta, config.fd_step);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smax / smin > 1e12)
      throw SingularJacobian("solver: Jacobian numerically rank-deficient");
    const Eigen::VectorXd step = svd.solve(-f);
    double lambda = 1.0;
    bool accepted = false;
    for (int h = 0; h < config.step_halving_max; ++h) {
      const Eigen::VectorXd cand = theta + lambda * step;
      const Eigen::VectorXd fc = phi(cand);
      if (fc.allFinite()) {
        const double rc = fc.lpNorm<Eigen::Infinity>();
        if (rc < resid) {
          theta = cand;
          f = fc;
          resid = rc;
          accepted = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!accepted) throw NonConvergence("solver: step halving failed to reduce residual");
  }
  if (resid <= config.tolerance) return theta;
  throw NonConvergence("solver: max iterations exhausted");
}

double integrate_lower_truncated(const ScalarFn& g, double lower,
                                 const QuadratureRule& rule) {
  double total = 0.0;
  for (int j = 0; j < rule.size(); ++j) {
    const double u = rule.nodes[j];
    const double r = u / (1.0 - u);
    const double x = lower + r * r;
    const double jacobian = 2.0 * u / std::pow(1.0 - u, 3);
    const double gx = g(x);
    if (!std::isfinite(gx)) throw NonFinite("integrate_lower_truncated: g not finite at node");
    total += rule.weights[j] * jacobian * gx;
  }
  return total;
}

}  // namespace cct
