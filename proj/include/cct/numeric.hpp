#pragma once

#include <Eigen/Dense>
#include <functional>

#include "cct/errors.hpp"

namespace cct {

struct SolverConfig {
  int max_iterations = 50;
  double tolerance = 1e-8;    // sup-norm on the estimating-function value
  int step_halving_max = 30;
  double fd_step = 1e-6;      // relative finite-difference step
};

/// Fixed quadrature rule. Finite-interval rules live on (0,1); semi-infinite
/// rules store the same (0,1) abscissae and are applied through the change of
/// variables x = lower + (u/(1-u))^2, which keeps integrable endpoint
/// singularities (Weibull shapes down to 0.5) within tolerance.
struct QuadratureRule {
  enum class Kind { legendre, semi_infinite };
  Eigen::VectorXd nodes;    // u_j in (0,1)
  Eigen::VectorXd weights;  // Gauss-Legendre weights on (0,1)
  Kind kind = Kind::semi_infinite;

  static QuadratureRule legendre(int n);
  static QuadratureRule semi_infinite(int n = 128);
  int size() const { return static_cast<int>(nodes.size()); }
};

using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using ScalarFn = std::function<double(double)>;

/// Damped Newton root finder for a vector estimating equation phi(theta) = 0.
/// Central-difference Jacobian, step halving until the residual sup-norm
/// decreases. Throws NonConvergence or SingularJacobian.
Eigen::VectorXd solve_estimating_equation(const VectorFn& phi,
                                          const Eigen::VectorXd& start,
                                          const SolverConfig& config = {});

/// Integral of g over (lower, infinity) via the rule's change of variables.
double integrate_lower_truncated(const ScalarFn& g, double lower,
                                 const QuadratureRule& rule);

/// Central-difference Jacobian; step h_j = fd_step * max(1, |at_j|).
Eigen::MatrixXd finite_diff_jacobian(const VectorFn& f, const Eigen::VectorXd& at,
                                     double fd_step = 1e-6);

double condition_number(const Eigen::MatrixXd& m);

/// Condition-guarded inverse: throws Error when the condition number
/// estimate exceeds 1e12.
template <class Error>
Eigen::MatrixXd guarded_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > 1e12) throw Error(what);
  return svd.matrixV() * svd.singularValues().cwiseInverse().asDiagonal() *
         svd.matrixU().transpose();
}

}  // namespace cct
