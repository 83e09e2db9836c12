#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cct/estimators.hpp"
#include "cct/types.hpp"

namespace cct {

enum class Specification { correct, estimated, incorrect };

std::string specification_name(Specification s);

/// One estimator entry of a scenario: which fit to run and how its nuisance
/// inputs are specified.
struct EstimatorSpec {
  std::string name;  // oracle, naive, cc, cmi-z, cmi-yz, acc-lambda, macc-lambda,
                     // ipw, mle, aipw-eff, aipw-closed, aipw-lambda
  Specification spec = Specification::correct;
};

struct ScenarioConfig {
  int n = 1000;
  int replications = 500;
  ThetaParams theta_true;
  AftParams gamma_true;  // f_{X|Z}: coefficients (g0, gz...), log_scale
  AftParams eta_true;    // f_{C|Y,Z}: coefficients (e0, ey, ez...), log_scale
  double a_mean = 2.0;   // anchor distribution Normal(a_mean, a_sd); a_sd = 0 fixes it
  double a_sd = 1.0;
  double target_censoring = -1.0;  // in (0,1): calibrate eta0; otherwise use eta_true[0]
  double incorrect_gamma_sigma = 1.2;  // misspecified Gumbel sigma for f_{X|Z}
  std::vector<EstimatorSpec> estimators;
  int quadrature_nodes = 64;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: use CCT_THREADS or hardware concurrency

  void validate() const;
};

struct CellReport {
  std::string estimator;
  std::string specification;
  std::string coefficient;
  double percent_bias = 0.0;
  double mean_se = 0.0;
  double empirical_sd = 0.0;
  double coverage = 0.0;  // percent
};

struct ScenarioReport {
  std::vector<CellReport> cells;
  std::map<std::string, int> failures;  // per estimator:spec key
  double realized_censoring = 0.0;
  int n = 0;
  int replications = 0;
  double censoring_rate = -1.0;  // calibration target when used
  // Raw per-replication estimates and standard errors keyed by estimator:spec,
  // one row per converged replication (columns = theta components).
  std::map<std::string, Eigen::MatrixXd> estimates;
  std::map<std::string, Eigen::MatrixXd> std_errors;
};

Dataset generate_dataset(const ScenarioConfig& config, int replication_index);

/// Bisection of the eta intercept against the Monte Carlo censoring fraction
/// of a pilot sample (common random numbers), to within 0.5 points.
double calibrate_eta0(const ScenarioConfig& config, double target_censoring,
                      int pilot_rows = 200000);

ScenarioReport run_scenario(const ScenarioConfig& config);

std::vector<ScenarioReport> sweep_censoring(const ScenarioConfig& config,
                                            const std::vector<double>& rates);

}  // namespace cct
