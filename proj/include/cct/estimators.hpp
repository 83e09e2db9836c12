#pragma once

#include <Eigen/Dense>
#include <optional>

#include "cct/numeric.hpp"
#include "cct/types.hpp"
#include "cct/weibull_aft.hpp"

namespace cct {

/// How the observation probability pi = pr(delta = 1 | Y, X, Z) is obtained.
/// true_params evaluates the Weibull survival under supplied eta; fitted
/// estimates eta from the data (time W, event 1 - delta, regressors
/// [1, y, z]); supplied takes fixed per-row probabilities.
struct PiSpec {
  enum class Source { true_params, fitted, supplied };
  Source source = Source::fitted;
  std::optional<AftParams> eta;
  std::optional<Eigen::VectorXd> probabilities;
  double pi_floor = 1e-4;

  static PiSpec from_true(AftParams eta_true) {
    PiSpec s;
    s.source = Source::true_params;
    s.eta = std::move(eta_true);
    return s;
  }
  static PiSpec from_fit() { return PiSpec{}; }
  static PiSpec from_probabilities(Eigen::VectorXd pi) {
    PiSpec s;
    s.source = Source::supplied;
    s.probabilities = std::move(pi);
    return s;
  }
};

/// Source of the f_{X|Z} Weibull parameters (gamma). Fitting uses time W,
/// event delta, regressors [1, z].
struct GammaSpec {
  enum class Source { supplied, fitted };
  Source source = Source::supplied;
  std::optional<AftParams> gamma;

  static GammaSpec from_params(AftParams g) {
    GammaSpec s;
    s.gamma = std::move(g);
    return s;
  }
  static GammaSpec from_fit() {
    GammaSpec s;
    s.source = Source::fitted;
    return s;
  }
};

struct AipwConfig {
  enum class Augmentation { none, eff, closed, closed_with_lambda };
  Augmentation augmentation = Augmentation::closed_with_lambda;
  PiSpec pi;
  GammaSpec x_given_z;             // needed by eff and closed
  QuadratureRule quadrature = QuadratureRule::semi_infinite(64);
  SolverConfig solver;
};

enum class CmiVariant { given_y_z_censored, given_z };

/// Outcome-model score at a complete observation (y, x, z):
/// (eps/s^2, r(x) eps/s^2, z eps/s^2, -1/s + eps^2/s^3), eps = y - mean.
Eigen::VectorXd score_theta(const Observation& obs, double x, const ThetaParams& theta);

/// pr(delta = 1 | y, w, z) under the Weibull censoring model; regressors
/// (1, y, z).
double compute_pi(const Observation& obs, const AftParams& eta);

/// Psi_closed(y, z) = E_{X|Y,Z} S_theta(y, X, z) with
/// f_{X|Y,Z} proportional to f_{Y|X,Z}(.; theta) f_{X|Z}(.; gamma).
Eigen::VectorXd psi_closed(const Observation& obs, const ThetaParams& theta,
                           const AftParams& gamma, const QuadratureRule& rule);

/// Efficient augmentation: ratio of E_{X|Y,Z}[(1 - 1/pi) S] to
/// E_{X|Y,Z}[1 - 1/pi].
Eigen::VectorXd psi_eff(const Observation& obs, const ThetaParams& theta,
                        const AftParams& eta, const AftParams& gamma,
                        const QuadratureRule& rule);

/// Efficiency matrix from augmentation rows a_i and base-estimator rows b_i:
/// Lambda = -(mean a b')' (mean a a')^{-1}. Throws SingularMoment.
Eigen::MatrixXd lambda_matrix(const Eigen::MatrixXd& aug_rows,
                              const Eigen::MatrixXd& base_rows);

EstimateResult fit_oracle(const Dataset& data, const SolverConfig& solver = {});
EstimateResult fit_naive(const Dataset& data, const SolverConfig& solver = {});
EstimateResult fit_cc(const Dataset& data, const SolverConfig& solver = {});

EstimateResult fit_ipw(const Dataset& data, const PiSpec& pi, const SolverConfig& solver = {});

EstimateResult fit_aipw(const Dataset& data, const AipwConfig& config);

EstimateResult fit_mle(const Dataset& data, const GammaSpec& gamma,
                       const QuadratureRule& rule = QuadratureRule::semi_infinite(64),
                       const SolverConfig& solver = {});

EstimateResult fit_cmi(const Dataset& data, CmiVariant variant, const GammaSpec& gamma,
                       const QuadratureRule& rule = QuadratureRule::semi_infinite(64),
                       const SolverConfig& solver = {});

EstimateResult fit_acc(const Dataset& data, const PiSpec& pi, bool use_lambda,
                       const GammaSpec& gamma,
                       const QuadratureRule& rule = QuadratureRule::semi_infinite(64),
                       const SolverConfig& solver = {});

EstimateResult fit_macc(const Dataset& data, const PiSpec& pi, bool use_lambda,
                        const GammaSpec& gamma,
                        const QuadratureRule& rule = QuadratureRule::semi_infinite(64),
                        const SolverConfig& solver = {});

}  // namespace cct
