#include "cct/weibull_aft.hpp"

#include <cmath>

#include "cct/errors.hpp"

namespace cct {

namespace {

int count_events(const Eigen::VectorXi& status) {
  int n = 0;
  for (int i = 0; i < status.size(); ++i) n += (status[i] != 0);
  return n;
}

}  // namespace

double aft_loglik(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                  const Eigen::MatrixXd& regressors, const AftParams& params) {
  const double sig = params.sigma();
  double ll = 0.0;
  for (int i = 0; i < times.size(); ++i) {
    const double u = (std::log(times[i]) - regressors.row(i).dot(params.coefficients)) / sig;
    const double eu = std::exp(u);
    if (status[i] != 0)
      ll += -params.log_scale - std::log(times[i]) + u - eu;
    else
      ll += -eu;
  }
  return ll;
}

Eigen::MatrixXd aft_score_rows(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                               const Eigen::MatrixXd& regressors, const AftParams& params) {
  const int n = static_cast<int>(times.size());
  const int p = static_cast<int>(params.coefficients.size());
  const double sig = params.sigma();
  Eigen::MatrixXd rows(n, p + 1);
  for (int i = 0; i < n; ++i) {
    const double u = (std::log(times[i]) - regressors.row(i).dot(params.coefficients)) / sig;
    const double eu = std::exp(u);
    if (status[i] != 0) {
      // event: d/d coef_j = -r_j (1 - e^u) / sigma, d/d log sigma = -1 - u (1 - e^u)
      rows.row(i).head(p) = regressors.row(i) * (-(1.0 - eu) / sig);
      rows(i, p) = -1.0 - u * (1.0 - eu);
    } else {
      // censored: log S = -e^u
      rows.row(i).head(p) = regressors.row(i) * (eu / sig);
      rows(i, p) = u * eu;
    }
  }
  return rows;
}

Eigen::VectorXd score_aft(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                          const Eigen::MatrixXd& regressors, const AftParams& params) {
  return aft_score_rows(times, status, regressors, params).colwise().sum();
}

AftFit fit_aft(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
               const Eigen::MatrixXd& regressors, const SolverConfig& config) {
  const int n = static_cast<int>(times.size());
  const int p = static_cast<int>(regressors.cols());
  if (n == 0 || regressors.rows() != n || status.size() != n)
    throw DegenerateDesign("fit_aft: shape mismatch");
  if ((times.array() <= 0.0).any()) throw NonFinite("fit_aft: nonpositive time");
  if (count_events(status) < 5) throw AllCensored("fit_aft: fewer than 5 events");
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(regressors);
    if (qr.rank() < p) throw DegenerateDesign("fit_aft: rank-deficient regressor matrix");
  }

  const Eigen::VectorXd logt = times.array().log();

  // Start from least squares of log time; keeps Newton in the concave basin.
  AftParams params;
  params.coefficients = regressors.colPivHouseholderQr().solve(logt);
  {
    const Eigen::VectorXd resid = logt - regressors * params.coefficients;
    const double sd = std::sqrt(resid.squaredNorm() / std::max(1, n - p));
    params.log_scale = std::log(std::max(sd, 1e-2));
  }

  auto loglik = [&](const AftParams& q) { return aft_loglik(times, status, regressors, q); };
  auto score = [&](const AftParams& q) { return score_aft(times, status, regressors, q); };

  double ll = loglik(params);
  Eigen::VectorXd f = score(params);
  const double tol = 1e-6;
  bool converged = false;
  Eigen::MatrixXd hess(p + 1, p + 1);

  auto numeric_hessian = [&](const AftParams& q) {
    Eigen::VectorXd v = q.to_vector();
    return finite_diff_jacobian(
        [&](const Eigen::VectorXd& w) { return score(AftParams::from_vector(w)); }, v,
        config.fd_step);
  };

  for (int it = 0; it < 4 * config.max_iterations; ++it) {
    if (f.lpNorm<Eigen::Infinity>() <= tol) {
      converged = true;
      break;
    }
    hess = numeric_hessian(params);
    bool improved = false;
    const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    for (double mu : {0.0, 1e-6, 1e-4, 1e-2, 1.0, 1e2}) {
      Eigen::MatrixXd lhs = -hess + mu * scale * Eigen::MatrixXd::Identity(p + 1, p + 1);
      Eigen::VectorXd step = lhs.colPivHouseholderQr().solve(f);
      if (!step.allFinite()) continue;
      double lambda = 1.0;
      for (int h = 0; h < config.step_halving_max && !improved; ++h) {
        AftParams cand = AftParams::from_vector(params.to_vector() + lambda * step);
        const double lc = loglik(cand);
        if (std::isfinite(lc) && lc > ll + 1e-11) {
          params = cand;
          ll = lc;
          f = score(params);
          improved = true;
        }
        lambda *= 0.5;
      }
      if (improved) break;
    }
    if (!improved) break;
  }

  if (!converged) throw NonConvergence("fit_aft: likelihood ascent stalled");
  if (params.log_scale < -12.0)
    throw NonConvergence("fit_aft: scale collapsed toward zero (degenerate times)");

  AftFit fit;
  fit.params = params;
  fit.converged = true;
  fit.loglik = ll;
  hess = numeric_hessian(params);
  fit.covariance = guarded_inverse<SingularNuisanceInformation>(
      Eigen::MatrixXd(-hess), "fit_aft: singular observed information");
  return fit;
}

double survival_prob(double t, const Eigen::VectorXd& regressor_row, const AftParams& params) {
  const double m = regressor_row.dot(params.coefficients);
  const double u = (std::log(t) - m) / params.sigma();
  return std::exp(-std::exp(u));
}

double log_density(double t, const Eigen::VectorXd& regressor_row, const AftParams& params) {
  const double m = regressor_row.dot(params.coefficients);
  const double u = (std::log(t) - m) / params.sigma();
  return -params.log_scale - std::log(t) + u - std::exp(u);
}

}  // namespace cct
