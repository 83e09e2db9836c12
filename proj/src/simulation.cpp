#include "cct/simulation.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "cct/errors.hpp"
#include "cct/rng.hpp"

namespace cct {

namespace {

constexpr std::uint64_t kPilotStream = 0xC0FFEEULL;

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CCT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

constexpr double kZ975 = 1.959963984540054;

struct DrawnRow {
  double y, z, a, x, c;
};

DrawnRow draw_row(const ScenarioConfig& cfg, Rng& rng) {
  DrawnRow r;
  r.z = rng.normal();
  r.a = cfg.a_mean + cfg.a_sd * rng.normal();
  const double lam_x = std::exp(cfg.gamma_true.coefficients[0] +
                                cfg.gamma_true.coefficients[1] * r.z);
  r.x = rng.weibull(lam_x, cfg.gamma_true.sigma());
  r.y = cfg.theta_true.beta0 + cfg.theta_true.beta_x * (r.a - r.x) +
        cfg.theta_true.beta_z[0] * r.z + cfg.theta_true.sigma * rng.normal();
  const double lam_c = std::exp(cfg.eta_true.coefficients[0] +
                                cfg.eta_true.coefficients[1] * r.y +
                                cfg.eta_true.coefficients[2] * r.z);
  r.c = rng.weibull(lam_c, cfg.eta_true.sigma());
  return r;
}

std::string spec_key(const EstimatorSpec& es) {
  return es.name + ":" + specification_name(es.spec);
}

}  // namespace

std::string specification_name(Specification s) {
  switch (s) {
    case Specification::correct: return "correct";
    case Specification::estimated: return "estimated";
    case Specification::incorrect: return "incorrect";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  if (n < 50) throw ConfigError("scenario: n must be at least 50");
  if (replications < 1) throw ConfigError("scenario: replications must be at least 1");
  if (theta_true.beta_z.size() != 1)
    throw ConfigError("scenario: the generator uses exactly one z covariate");
  if (gamma_true.coefficients.size() != 2)
    throw ConfigError("scenario: gamma_true needs (intercept, z) coefficients");
  if (eta_true.coefficients.size() != 3)
    throw ConfigError("scenario: eta_true needs (intercept, y, z) coefficients");
  if (target_censoring >= 0.0 &&
      !(target_censoring > 0.05 && target_censoring < 0.99))
    throw ConfigError("scenario: target_censoring must lie in (0.05, 0.99)");
  if (estimators.empty()) throw ConfigError("scenario: no estimators configured");
}

Dataset generate_dataset(const ScenarioConfig& config, int replication_index) {
  Rng rng(config.seed, static_cast<std::uint64_t>(replication_index));
  Dataset data(config.n);
  for (int i = 0; i < config.n; ++i) {
    const DrawnRow r = draw_row(config, rng);
    Observation& o = data[i];
    o.y = r.y;
    o.z = Eigen::VectorXd::Constant(1, r.z);
    o.anchor = r.a;
    o.latent_x = r.x;
    o.latent_c = r.c;
    o.w = std::min(r.x, r.c);
    o.delta = r.x <= r.c ? 1 : 0;
  }
  return data;
}

double calibrate_eta0(const ScenarioConfig& config, double target_censoring, int pilot_rows) {
  if (!(target_censoring > 0.05 && target_censoring < 0.99))
    throw ConfigError("calibrate_eta0: target outside (0.05, 0.99)");
  // Common random numbers: one pilot sample of (x, y, z, censoring quantile).
  Rng rng(config.seed, kPilotStream);
  ScenarioConfig base = config;
  base.eta_true.coefficients[0] = 0.0;
  std::vector<double> x(pilot_rows), gap(pilot_rows);
  for (int i = 0; i < pilot_rows; ++i) {
    const DrawnRow r = draw_row(base, rng);
    x[i] = r.x;
    // c = exp(eta0) * c_base; censored iff x > c  <=>  log x - log c_base > eta0
    gap[i] = std::log(r.x) - std::log(r.c);
  }
  auto censoring_at = [&](double eta0) {
    int cens = 0;
    for (int i = 0; i < pilot_rows; ++i) cens += (gap[i] > eta0);
    return static_cast<double>(cens) / pilot_rows;
  };
  double lo = -20.0, hi = 20.0;
  if (censoring_at(lo) < target_censoring || censoring_at(hi) > target_censoring)
    throw NoBracket("calibrate_eta0: target unreachable for eta0 in [-20, 20]");
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (censoring_at(mid) > target_censoring)
      lo = mid;  // more censoring than wanted: raise eta0
    else
      hi = mid;
  }
  const double eta0 = 0.5 * (lo + hi);
  if (std::abs(censoring_at(eta0) - target_censoring) > 0.005)
    throw NoBracket("calibrate_eta0: could not reach target within 0.5 points");
  return eta0;
}

namespace {

struct RepOutcome {
  bool ok = false;
  Eigen::VectorXd theta;
  Eigen::VectorXd se;
};

EstimateResult run_one(const EstimatorSpec& es, const ScenarioConfig& cfg, const Dataset& data,
                       const QuadratureRule& rule, Rng& aux_rng) {
  const GammaSpec gamma_true = GammaSpec::from_params(cfg.gamma_true);
  AftParams gamma_bad = cfg.gamma_true;
  gamma_bad.log_scale = std::log(cfg.incorrect_gamma_sigma);

  auto pi_for = [&](Specification s) -> PiSpec {
    switch (s) {
      case Specification::correct: return PiSpec::from_true(cfg.eta_true);
      case Specification::estimated: return PiSpec::from_fit();
      case Specification::incorrect: {
        Eigen::VectorXd pi(data.size());
        for (int i = 0; i < pi.size(); ++i) pi[i] = 0.1 + 0.8 * aux_rng.uniform();
        return PiSpec::from_probabilities(pi);
      }
    }
    throw ConfigError("bad specification");
  };
  auto gamma_for = [&](Specification s) -> GammaSpec {
    switch (s) {
      case Specification::correct: return gamma_true;
      case Specification::estimated: return GammaSpec::from_fit();
      case Specification::incorrect: return GammaSpec::from_params(gamma_bad);
    }
    throw ConfigError("bad specification");
  };

  if (es.name == "oracle") return fit_oracle(data);
  if (es.name == "naive") return fit_naive(data);
  if (es.name == "cc") return fit_cc(data);
  if (es.name == "cmi-z")
    return fit_cmi(data, CmiVariant::given_z, gamma_for(es.spec), rule);
  if (es.name == "cmi-yz")
    return fit_cmi(data, CmiVariant::given_y_z_censored, gamma_for(es.spec), rule);
  if (es.name == "acc-lambda" || es.name == "acc")
    return fit_acc(data, pi_for(es.spec), es.name == "acc-lambda", gamma_for(es.spec), rule);
  if (es.name == "macc-lambda" || es.name == "macc")
    return fit_macc(data, pi_for(es.spec), es.name == "macc-lambda", gamma_for(es.spec), rule);
  if (es.name == "ipw") return fit_ipw(data, pi_for(es.spec));
  if (es.name == "mle") return fit_mle(data, gamma_for(es.spec), rule);
  if (es.name == "aipw-eff" || es.name == "aipw-closed" || es.name == "aipw-lambda") {
    AipwConfig ac;
    ac.pi = pi_for(es.spec);
    ac.quadrature = rule;
    if (es.name == "aipw-eff") ac.augmentation = AipwConfig::Augmentation::eff;
    if (es.name == "aipw-closed") ac.augmentation = AipwConfig::Augmentation::closed;
    if (es.name == "aipw-lambda") ac.augmentation = AipwConfig::Augmentation::closed_with_lambda;
    // The augmentation model follows the specification except in the
    // incorrect-pi scenario, where the paper keeps Psi at the correct form.
    ac.x_given_z = es.spec == Specification::estimated ? GammaSpec::from_fit() : gamma_true;
    return fit_aipw(data, ac);
  }
  throw ConfigError("unknown estimator: " + es.name);
}

}  // namespace

ScenarioReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  ScenarioConfig cfg = config;
  if (config.target_censoring > 0.0)
    cfg.eta_true.coefficients[0] = calibrate_eta0(config, config.target_censoring);

  const int reps = cfg.replications;
  const int nspec = static_cast<int>(cfg.estimators.size());
  const int p = cfg.theta_true.dim();

  std::vector<std::vector<RepOutcome>> results(nspec);
  for (auto& v : results) v.resize(reps);
  std::vector<double> censored_fraction(reps, 0.0);
  const QuadratureRule rule = QuadratureRule::semi_infinite(cfg.quadrature_nodes);

  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      const Dataset data = generate_dataset(cfg, r);
      int cens = 0;
      for (const Observation& o : data) cens += (o.delta == 0);
      censored_fraction[r] = static_cast<double>(cens) / cfg.n;
      // Separate stream for the incorrect-pi random weights, redrawn per
      // replication.
      Rng aux(cfg.seed ^ 0x9E3779B97F4A7C15ULL, static_cast<std::uint64_t>(r));
      for (int e = 0; e < nspec; ++e) {
        RepOutcome& out = results[e][r];
        try {
          const EstimateResult fit = run_one(cfg.estimators[e], cfg, data, rule, aux);
          if (!fit.converged) continue;
          out.theta = fit.theta.to_vector();
          out.se = fit.std_errors;
          out.ok = out.theta.allFinite() && out.se.allFinite();
        } catch (const NumericError&) {
          out.ok = false;
        }
      }
    }
  };

  const int nthreads = std::min(worker_count(cfg.threads), reps);
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  ScenarioReport report;
  report.n = cfg.n;
  report.replications = reps;
  report.censoring_rate = config.target_censoring;
  double cens_sum = 0.0;
  for (double c : censored_fraction) cens_sum += c;
  report.realized_censoring = cens_sum / reps;

  const Eigen::VectorXd truth = cfg.theta_true.to_vector();
  std::vector<std::string> coef_names = {"beta0", "beta_x", "beta_z", "sigma"};

  for (int e = 0; e < nspec; ++e) {
    const std::string key = spec_key(cfg.estimators[e]);
    int ok = 0;
    for (const auto& out : results[e]) ok += out.ok;
    report.failures[key] = reps - ok;
    Eigen::MatrixXd est(ok, p), ses(ok, p);
    int row = 0;
    for (const auto& out : results[e]) {
      if (!out.ok) continue;
      est.row(row) = out.theta.transpose();
      ses.row(row) = out.se.transpose();
      ++row;
    }
    report.estimates[key] = est;
    report.std_errors[key] = ses;
    for (int k = 0; k < p; ++k) {
      CellReport cell;
      cell.estimator = cfg.estimators[e].name;
      cell.specification = specification_name(cfg.estimators[e].spec);
      cell.coefficient = k < 3 ? coef_names[k] : coef_names[3];
      if (ok > 0) {
        const double mean = est.col(k).mean();
        cell.percent_bias = (mean - truth[k]) / truth[k] * 100.0;
        cell.mean_se = ses.col(k).mean() * 100.0;
        cell.empirical_sd =
            std::sqrt((est.col(k).array() - mean).square().sum() / ok) * 100.0;
        int hit = 0;
        for (int r = 0; r < ok; ++r)
          hit += std::abs(est(r, k) - truth[k]) <= kZ975 * ses(r, k);
        cell.coverage = 100.0 * hit / ok;
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

std::vector<ScenarioReport> sweep_censoring(const ScenarioConfig& config,
                                            const std::vector<double>& rates) {
  std::vector<ScenarioReport> out;
  out.reserve(rates.size());
  for (double rate : rates) {
    ScenarioConfig cfg = config;
    cfg.target_censoring = rate;
    out.push_back(run_scenario(cfg));
  }
  return out;
}

}  // namespace cct
