#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace cct {

/// One subject. `w` is the observed value of the positive censored covariate
/// (the minimum of the latent covariate and the censoring variable), `delta`
/// is 1 when the covariate itself was observed. When `anchor` is present the
/// outcome-model regressor is (anchor - x); otherwise it is x itself.
struct Observation {
  double y = 0.0;
  double w = 0.0;
  int delta = 1;
  Eigen::VectorXd z;
  std::optional<double> anchor;
  std::optional<double> latent_x;
  std::optional<double> latent_c;

  double regressor(double x) const { return anchor ? *anchor - x : x; }
};

using Dataset = std::vector<Observation>;

/// Outcome-model parameters: E[Y | X, Z] = beta0 + beta_x * r(X) + beta_z' Z,
/// residual standard deviation sigma.
struct ThetaParams {
  double beta0 = 0.0;
  double beta_x = 0.0;
  Eigen::VectorXd beta_z;
  double sigma = 1.0;

  int dim() const { return 3 + static_cast<int>(beta_z.size()); }
  Eigen::VectorXd to_vector() const;
  static ThetaParams from_vector(const Eigen::VectorXd& v);
};

inline Eigen::VectorXd ThetaParams::to_vector() const {
  Eigen::VectorXd v(dim());
  v[0] = beta0;
  v[1] = beta_x;
  v.segment(2, beta_z.size()) = beta_z;
  v[dim() - 1] = sigma;
  return v;
}

inline ThetaParams ThetaParams::from_vector(const Eigen::VectorXd& v) {
  ThetaParams t;
  t.beta0 = v[0];
  t.beta_x = v[1];
  t.beta_z = v.segment(2, v.size() - 3);
  t.sigma = v[v.size() - 1];
  return t;
}

/// Weibull AFT parameters on the log-time (Gumbel) scale:
/// log T = coefficients' r + exp(log_scale) * e, e ~ standard min-Gumbel.
/// Weibull shape = exp(-log_scale), Weibull scale = exp(coefficients' r).
struct AftParams {
  Eigen::VectorXd coefficients;  // intercept first, then regressors
  double log_scale = 0.0;

  double sigma() const { return std::exp(log_scale); }
  int dim() const { return static_cast<int>(coefficients.size()) + 1; }
  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(dim());
    v.head(coefficients.size()) = coefficients;
    v[dim() - 1] = log_scale;
    return v;
  }
  static AftParams from_vector(const Eigen::VectorXd& v) {
    AftParams p;
    p.coefficients = v.head(v.size() - 1);
    p.log_scale = v[v.size() - 1];
    return p;
  }
};

struct AftFit {
  AftParams params;
  Eigen::MatrixXd covariance;  // inverse observed information
  bool converged = false;
  double loglik = 0.0;
};

enum class EstimatorId {
  oracle,
  naive,
  cc,
  cmi_given_yz,
  cmi_given_z,
  acc,
  macc,
  ipw,
  aipw,
  mle,
};

std::string estimator_name(EstimatorId id);

/// Point estimate with sandwich covariance and diagnostics.
struct EstimateResult {
  EstimatorId estimator_id = EstimatorId::oracle;
  ThetaParams theta;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd std_errors;
  bool converged = false;
  int n_used = 0;
  std::optional<AftFit> nuisance_fit;
  bool inconsistent_under_outcome_dependent_censoring = false;
};

}  // namespace cct
