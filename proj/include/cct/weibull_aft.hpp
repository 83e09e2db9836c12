#pragma once

#include <Eigen/Dense>

#include "cct/numeric.hpp"
#include "cct/types.hpp"

namespace cct {

/// Censored Weibull log-likelihood on the original time scale:
/// sum_i status_i log f(t_i) + (1 - status_i) log S(t_i).
double aft_loglik(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                  const Eigen::MatrixXd& regressors, const AftParams& params);

/// Per-observation analytic score wrt (coefficients, log_scale); n x dim.
Eigen::MatrixXd aft_score_rows(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                               const Eigen::MatrixXd& regressors, const AftParams& params);

/// Summed analytic score.
Eigen::VectorXd score_aft(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                          const Eigen::MatrixXd& regressors, const AftParams& params);

/// Maximum likelihood fit of the censored Weibull AFT model.
/// `regressors` must carry its own intercept column. status_i = 1 means the
/// event was observed at times_i; 0 means right-censored at times_i.
AftFit fit_aft(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
               const Eigen::MatrixXd& regressors, const SolverConfig& config = {});

/// P(T > t | row) under the fitted Weibull.
double survival_prob(double t, const Eigen::VectorXd& regressor_row, const AftParams& params);

/// log f_T(t | row) on the original time scale.
double log_density(double t, const Eigen::VectorXd& regressor_row, const AftParams& params);

}  // namespace cct
