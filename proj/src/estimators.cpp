#include "cct/estimators.hpp"

#include <cmath>
#include <limits>

#include "cct/errors.hpp"
#include "cct/variance.hpp"

namespace cct {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Flat {
  int n = 0;
  int q = 0;  // z dimension
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Eigen::VectorXi delta;
  Eigen::MatrixXd z;
  std::vector<std::optional<double>> anchor;
  Eigen::VectorXd latent_x;  // NaN where absent
  Eigen::MatrixXd reg_eta;   // [1, y, z]
  Eigen::MatrixXd reg_gamma; // [1, z]

  int p() const { return 3 + q; }
  double reg(int i, double x) const { return anchor[i] ? *anchor[i] - x : x; }
};

Flat flatten(const Dataset& data) {
  Flat f;
  f.n = static_cast<int>(data.size());
  if (f.n == 0) throw DegenerateDesign("empty dataset");
  f.q = static_cast<int>(data[0].z.size());
  f.y.resize(f.n);
  f.w.resize(f.n);
  f.delta.resize(f.n);
  f.z.resize(f.n, f.q);
  f.anchor.resize(f.n);
  f.latent_x.setConstant(f.n, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < f.n; ++i) {
    const Observation& o = data[i];
    if (o.z.size() != f.q) throw DegenerateDesign("ragged z vectors");
    f.y[i] = o.y;
    f.w[i] = o.w;
    f.delta[i] = o.delta;
    f.z.row(i) = o.z;
    f.anchor[i] = o.anchor;
    if (o.latent_x) f.latent_x[i] = *o.latent_x;
  }
  f.reg_eta.resize(f.n, 2 + f.q);
  f.reg_eta.col(0).setOnes();
  f.reg_eta.col(1) = f.y;
  f.reg_eta.rightCols(f.q) = f.z;
  f.reg_gamma.resize(f.n, 1 + f.q);
  f.reg_gamma.col(0).setOnes();
  f.reg_gamma.rightCols(f.q) = f.z;
  return f;
}

void score_into(const Flat& f, int i, double r, const ThetaParams& th,
                Eigen::Ref<Eigen::RowVectorXd> out) {
  const double s = th.sigma;
  double eps = f.y[i] - th.beta0 - th.beta_x * r;
  for (int k = 0; k < f.q; ++k) eps -= th.beta_z[k] * f.z(i, k);
  const double e_s2 = eps / (s * s);
  out[0] = e_s2;
  out[1] = r * e_s2;
  for (int k = 0; k < f.q; ++k) out[2 + k] = f.z(i, k) * e_s2;
  out[out.size() - 1] = -1.0 / s + eps * eps / (s * s * s);
}

Eigen::MatrixXd score_rows_at(const Flat& f, const Eigen::VectorXd& xvals,
                              const ThetaParams& th) {
  Eigen::MatrixXd rows(f.n, f.p());
  for (int i = 0; i < f.n; ++i) score_into(f, i, f.reg(i, xvals[i]), th, rows.row(i));
  return rows;
}

// Weighted least squares of y on [1, r, z] plus the weighted sigma moment;
// used as Newton seed.
ThetaParams wls_seed(const Flat& f, const Eigen::VectorXd& xvals, const Eigen::VectorXd& wts) {
  const int k = 2 + f.q;
  Eigen::MatrixXd design(f.n, k);
  design.col(0).setOnes();
  for (int i = 0; i < f.n; ++i) design(i, 1) = f.reg(i, xvals[i]);
  design.rightCols(f.q) = f.z;
  Eigen::MatrixXd wd = wts.asDiagonal() * design;
  Eigen::VectorXd beta = (design.transpose() * wd)
                             .colPivHouseholderQr()
                             .solve(wd.transpose() * f.y);
  const Eigen::VectorXd resid = f.y - design * beta;
  const double s2 = (wts.array() * resid.array().square()).sum() / wts.sum();
  ThetaParams th;
  th.beta0 = beta[0];
  th.beta_x = beta[1];
  th.beta_z = beta.tail(f.q);
  th.sigma = std::sqrt(std::max(s2, 1e-12));
  return th;
}

// Solve mean estimating equation rows_fn(theta).colwise().mean() = 0.
using RowsFn = std::function<Eigen::MatrixXd(const ThetaParams&)>;

ThetaParams solve_theta(const RowsFn& rows_fn, const ThetaParams& start, int n,
                        const SolverConfig& solver) {
  const int p = start.dim();
  auto mean_phi = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    if (v[p - 1] <= 0.0)
      return Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    return rows_fn(ThetaParams::from_vector(v)).colwise().mean();
  };
  Eigen::VectorXd sol = solve_estimating_equation(mean_phi, start.to_vector(), solver);
  (void)n;
  return ThetaParams::from_vector(sol);
}

Eigen::MatrixXd bread_at(const RowsFn& rows_fn, const ThetaParams& theta,
                         double fd_step = 1e-6) {
  auto mean_phi = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return rows_fn(ThetaParams::from_vector(v)).colwise().mean();
  };
  return finite_diff_jacobian(mean_phi, theta.to_vector(), fd_step);
}

EstimateResult finalize(EstimatorId id, const ThetaParams& theta, const SandwichParts& parts,
                        int n_used, bool inconsistent,
                        std::optional<AftFit> nuisance = std::nullopt) {
  EstimateResult r;
  r.estimator_id = id;
  r.theta = theta;
  r.covariance = parts.covariance;
  r.std_errors = parts.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.converged = true;
  r.n_used = n_used;
  r.inconsistent_under_outcome_dependent_censoring = inconsistent;
  r.nuisance_fit = std::move(nuisance);
  return r;
}

// --- pi handling -----------------------------------------------------------

struct ResolvedPi {
  Eigen::VectorXd pi;
  Eigen::VectorXd aug_weight;  // 1 - delta/pi, computed as -expm1(u) on events
  std::optional<AftParams> eta;
  std::optional<AftFit> eta_fit;
};

void pi_from_eta(const Flat& f, const AftParams& eta, Eigen::VectorXd& pi,
                 Eigen::VectorXd& aug) {
  const double sig = eta.sigma();
  pi.resize(f.n);
  aug.resize(f.n);
  for (int i = 0; i < f.n; ++i) {
    const double m = f.reg_eta.row(i).dot(eta.coefficients);
    const double u = std::exp((std::log(f.w[i]) - m) / sig);
    pi[i] = std::exp(-u);
    aug[i] = f.delta[i] ? -std::expm1(u) : 1.0;
  }
}

ResolvedPi resolve_pi(const Flat& f, const PiSpec& spec, const SolverConfig& solver) {
  ResolvedPi r;
  switch (spec.source) {
    case PiSpec::Source::true_params:
      if (!spec.eta) throw ConfigError("pi: true_params requires eta");
      r.eta = spec.eta;
      pi_from_eta(f, *spec.eta, r.pi, r.aug_weight);
      break;
    case PiSpec::Source::fitted: {
      Eigen::VectorXi rev(f.n);
      for (int i = 0; i < f.n; ++i) rev[i] = 1 - f.delta[i];  // censoring is the event
      AftFit fit = fit_aft(f.w, rev, f.reg_eta, solver);
      r.eta = fit.params;
      r.eta_fit = std::move(fit);
      pi_from_eta(f, *r.eta, r.pi, r.aug_weight);
      break;
    }
    case PiSpec::Source::supplied:
      if (!spec.probabilities || spec.probabilities->size() != f.n)
        throw ConfigError("pi: supplied probabilities missing or wrong length");
      r.pi = *spec.probabilities;
      r.aug_weight.resize(f.n);
      for (int i = 0; i < f.n; ++i)
        r.aug_weight[i] = f.delta[i] ? 1.0 - 1.0 / r.pi[i] : 1.0;
      break;
  }
  for (int i = 0; i < f.n; ++i)
    if (f.delta[i] && !(r.pi[i] > spec.pi_floor))
      throw ExtremeWeights("pi below floor on an uncensored row");
  return r;
}

AftParams resolve_gamma(const Flat& f, const GammaSpec& spec, const SolverConfig& solver,
                        std::optional<AftFit>* fit_out = nullptr) {
  if (spec.source == GammaSpec::Source::supplied) {
    if (!spec.gamma) throw ConfigError("gamma: supplied params missing");
    return *spec.gamma;
  }
  AftFit fit = fit_aft(f.w, f.delta, f.reg_gamma, solver);
  AftParams g = fit.params;
  if (fit_out) *fit_out = std::move(fit);
  return g;
}

// --- conditional-moment kernels over f_{X|Y,Z} -----------------------------

struct Nodes {
  Eigen::VectorXd x;    // offsets from the lower limit, (u/(1-u))^2
  Eigen::VectorXd wgt;  // quadrature weight times transform jacobian
};

Nodes make_nodes(const QuadratureRule& rule) {
  Nodes nd;
  const int m = rule.size();
  nd.x.resize(m);
  nd.wgt.resize(m);
  for (int j = 0; j < m; ++j) {
    const double u = rule.nodes[j];
    const double r = u / (1.0 - u);
    nd.x[j] = r * r;
    nd.wgt[j] = rule.weights[j] * 2.0 * u / std::pow(1.0 - u, 3);
  }
  return nd;
}

struct GammaEval {
  double m = 0.0;   // linear predictor of log X given z
  double sig = 1.0; // gumbel sigma
};

inline double weib_logpdf(double x, const GammaEval& g) {
  const double u = (std::log(x) - g.m) / g.sig;
  return -std::log(g.sig) - std::log(x) + u - std::exp(u);
}

// E_{X|Y,Z}[S_theta] restricted to x > lower (lower = 0 for Psi terms).
// When eta != nullptr also accumulates the (1 - 1/pi)-weighted moments.
struct CondScore {
  Eigen::VectorXd plain;      // E[S | x > lower]
  Eigen::VectorXd eff;        // E[(1-1/pi) S] / E[(1-1/pi)]
  double mean_x = 0.0;        // E[X | x > lower]
  double mean_pi = 0.0;       // E[pi(Y,X,Z) | x > lower]
  double norm = 0.0;          // unnormalized mass (diagnostic)
};

CondScore cond_score_row(const Flat& f, int i, double lower, const ThetaParams& th,
                         const GammaEval& g, const Nodes& nd, const AftParams* eta,
                         bool want_eff) {
  const int p = f.p();
  const double s = th.sigma;
  const double bz_z = f.z.row(i).dot(th.beta_z);
  double eta_m = 0.0, eta_sig = 1.0;
  if (eta) {
    eta_m = f.reg_eta.row(i).dot(eta->coefficients);
    eta_sig = eta->sigma();
  }
  Eigen::VectorXd num = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd num_eff = Eigen::VectorXd::Zero(p);
  double den = 0.0, den_eff = 0.0, num_x = 0.0, num_pi = 0.0;
  Eigen::VectorXd sbuf(p);
  for (int j = 0; j < nd.x.size(); ++j) {
    const double x = lower + nd.x[j];
    if (x <= 0.0) continue;
    const double r = f.reg(i, x);
    const double eps = f.y[i] - th.beta0 - th.beta_x * r - bz_z;
    const double lognorm = -0.5 * kLog2Pi - std::log(s) - 0.5 * eps * eps / (s * s);
    const double lb = lognorm + weib_logpdf(x, g);
    const double b = nd.wgt[j] * std::exp(lb);
    const double e_s2 = eps / (s * s);
    sbuf[0] = e_s2;
    sbuf[1] = r * e_s2;
    for (int k = 0; k < f.q; ++k) sbuf[2 + k] = f.z(i, k) * e_s2;
    sbuf[p - 1] = -1.0 / s + eps * eps / (s * s * s);
    den += b;
    num += b * sbuf;
    num_x += b * x;
    if (eta) {
      const double u = std::exp((std::log(x) - eta_m) / eta_sig);
      num_pi += b * std::exp(-u);
      if (want_eff) {
        // (1 - 1/pi) = -expm1(u); fold exp(u) into the log weight
        const double t1 = nd.wgt[j] * (std::exp(lb) - std::exp(lb + u));
        den_eff += t1;
        num_eff += t1 * sbuf;
      }
    }
  }
  if (!(den > 1e-300)) throw QuadratureFailure("conditional density mass underflow");
  CondScore out;
  out.norm = den;
  out.plain = num / den;
  out.mean_x = num_x / den;
  if (eta) out.mean_pi = num_pi / den;
  if (want_eff) {
    if (!(std::abs(den_eff / den) > 1e-10))
      throw UnstableDenominator("psi_eff: denominator expectation too close to zero");
    out.eff = num_eff / den_eff;
  }
  return out;
}

GammaEval gamma_eval(const Flat& f, int i, const AftParams& gamma) {
  return GammaEval{f.reg_gamma.row(i).dot(gamma.coefficients), gamma.sigma()};
}

Eigen::MatrixXd psi_closed_rows(const Flat& f, const ThetaParams& th, const AftParams& gamma,
                                const Nodes& nd) {
  Eigen::MatrixXd rows(f.n, f.p());
  for (int i = 0; i < f.n; ++i)
    rows.row(i) = cond_score_row(f, i, 0.0, th, gamma_eval(f, i, gamma), nd, nullptr, false).plain;
  return rows;
}

Eigen::MatrixXd psi_eff_rows(const Flat& f, const ThetaParams& th, const AftParams& eta,
                             const AftParams& gamma, const Nodes& nd) {
  Eigen::MatrixXd rows(f.n, f.p());
  for (int i = 0; i < f.n; ++i)
    rows.row(i) = cond_score_row(f, i, 0.0, th, gamma_eval(f, i, gamma), nd, &eta, true).eff;
  return rows;
}

// Skip the augmentation entirely once every weight is numerically zero
// (degenerate censoring); the Lambda moments are 0/0 there.
bool augmentation_vanishes(const Eigen::VectorXd& aug) {
  return aug.cwiseAbs().maxCoeff() < 1e-7;
}

// --- shared plain/corrected variance helpers -------------------------------

// d (mean phi) / d eta' by central differences over the eta vector.
Eigen::MatrixXd dmean_deta(const std::function<Eigen::MatrixXd(const AftParams&)>& rows_of_eta,
                           const AftParams& eta, double step = 1e-5) {
  const Eigen::VectorXd v0 = eta.to_vector();
  Eigen::MatrixXd d;
  for (int j = 0; j < v0.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(v0[j]));
    Eigen::VectorXd hi = v0, lo = v0;
    hi[j] += h;
    lo[j] -= h;
    const Eigen::VectorXd up = rows_of_eta(AftParams::from_vector(hi)).colwise().mean();
    const Eigen::VectorXd dn = rows_of_eta(AftParams::from_vector(lo)).colwise().mean();
    if (j == 0) d.resize(up.size(), v0.size());
    d.col(j) = (up - dn) / (2.0 * h);
  }
  return d;
}

// n^-1 sum d phi_aft / d eta' (the AFT information block), by differencing the
// analytic score.
Eigen::MatrixXd aft_info_block(const Eigen::VectorXd& times, const Eigen::VectorXi& status,
                               const Eigen::MatrixXd& regressors, const AftParams& eta,
                               double step = 1e-5) {
  const Eigen::VectorXd v0 = eta.to_vector();
  const int n = static_cast<int>(times.size());
  Eigen::MatrixXd m(v0.size(), v0.size());
  for (int j = 0; j < v0.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(v0[j]));
    Eigen::VectorXd hi = v0, lo = v0;
    hi[j] += h;
    lo[j] -= h;
    m.col(j) = (score_aft(times, status, regressors, AftParams::from_vector(hi)) -
                score_aft(times, status, regressors, AftParams::from_vector(lo))) /
               (2.0 * h) / n;
  }
  return m;
}

}  // namespace

std::string estimator_name(EstimatorId id) {
  switch (id) {
    case EstimatorId::oracle: return "oracle";
    case EstimatorId::naive: return "naive";
    case EstimatorId::cc: return "cc";
    case EstimatorId::cmi_given_yz: return "cmi-yz";
    case EstimatorId::cmi_given_z: return "cmi-z";
    case EstimatorId::acc: return "acc";
    case EstimatorId::macc: return "macc";
    case EstimatorId::ipw: return "ipw";
    case EstimatorId::aipw: return "aipw";
    case EstimatorId::mle: return "mle";
  }
  return "?";
}

Eigen::VectorXd score_theta(const Observation& obs, double x, const ThetaParams& theta) {
  Dataset one{obs};
  const Flat f = flatten(one);
  Eigen::MatrixXd rows(1, f.p());
  score_into(f, 0, obs.regressor(x), theta, rows.row(0));
  return rows.row(0).transpose();
}

double compute_pi(const Observation& obs, const AftParams& eta) {
  Eigen::VectorXd row(2 + obs.z.size());
  row[0] = 1.0;
  row[1] = obs.y;
  row.tail(obs.z.size()) = obs.z;
  return survival_prob(obs.w, row, eta);
}

Eigen::VectorXd psi_closed(const Observation& obs, const ThetaParams& theta,
                           const AftParams& gamma, const QuadratureRule& rule) {
  Dataset one{obs};
  const Flat f = flatten(one);
  const Nodes nd = make_nodes(rule);
  return cond_score_row(f, 0, 0.0, theta, gamma_eval(f, 0, gamma), nd, nullptr, false).plain;
}

Eigen::VectorXd psi_eff(const Observation& obs, const ThetaParams& theta, const AftParams& eta,
                        const AftParams& gamma, const QuadratureRule& rule) {
  Dataset one{obs};
  const Flat f = flatten(one);
  const Nodes nd = make_nodes(rule);
  return cond_score_row(f, 0, 0.0, theta, gamma_eval(f, 0, gamma), nd, &eta, true).eff;
}

Eigen::MatrixXd lambda_matrix(const Eigen::MatrixXd& aug_rows, const Eigen::MatrixXd& base_rows) {
  const int n = static_cast<int>(aug_rows.rows());
  const Eigen::MatrixXd m = aug_rows.transpose() * aug_rows / n;      // E[a a']
  const Eigen::MatrixXd nmat = aug_rows.transpose() * base_rows / n;  // E[a b']
  const Eigen::MatrixXd minv = guarded_inverse<SingularMoment>(m, "lambda_matrix: singular moment");
  return -(nmat.transpose() * minv);
}

EstimateResult fit_oracle(const Dataset& data, const SolverConfig& solver) {
  const Flat f = flatten(data);
  if (!f.latent_x.allFinite()) throw ConfigError("fit_oracle: latent_x required on every row");
  auto rows_fn = [&](const ThetaParams& th) { return score_rows_at(f, f.latent_x, th); };
  const ThetaParams th = solve_theta(rows_fn, wls_seed(f, f.latent_x, Eigen::VectorXd::Ones(f.n)),
                                     f.n, solver);
  return finalize(EstimatorId::oracle, th, sandwich_plain(rows_fn(th), bread_at(rows_fn, th)),
                  f.n, false);
}

EstimateResult fit_naive(const Dataset& data, const SolverConfig& solver) {
  const Flat f = flatten(data);
  auto rows_fn = [&](const ThetaParams& th) { return score_rows_at(f, f.w, th); };
  const ThetaParams th =
      solve_theta(rows_fn, wls_seed(f, f.w, Eigen::VectorXd::Ones(f.n)), f.n, solver);
  return finalize(EstimatorId::naive, th, sandwich_plain(rows_fn(th), bread_at(rows_fn, th)),
                  f.n, true);
}

EstimateResult fit_cc(const Dataset& data, const SolverConfig& solver) {
  const Flat all = flatten(data);
  Dataset kept;
  kept.reserve(data.size());
  for (const Observation& o : data)
    if (o.delta) kept.push_back(o);
  if (static_cast<int>(kept.size()) < all.p() + 2)
    throw TooFewComplete("fit_cc: fewer than p+2 uncensored rows");
  const Flat f = flatten(kept);
  auto rows_fn = [&](const ThetaParams& th) { return score_rows_at(f, f.w, th); };
  const ThetaParams th =
      solve_theta(rows_fn, wls_seed(f, f.w, Eigen::VectorXd::Ones(f.n)), f.n, solver);
  return finalize(EstimatorId::cc, th, sandwich_plain(rows_fn(th), bread_at(rows_fn, th)),
                  f.n, true);
}

namespace {

struct IpwPieces {
  ThetaParams theta;
  ResolvedPi pi;
  RowsFn rows_fn;
};

IpwPieces ipw_solve(const Flat& f, const PiSpec& spec, const SolverConfig& solver) {
  IpwPieces out;
  out.pi = resolve_pi(f, spec, solver);
  const Eigen::VectorXd wts = f.delta.cast<double>().array() / out.pi.pi.array();
  const Eigen::VectorXd pi_copy = out.pi.pi;
  out.rows_fn = [&f, pi_copy](const ThetaParams& th) {
    Eigen::MatrixXd rows = score_rows_at(f, f.w, th);
    for (int i = 0; i < f.n; ++i) rows.row(i) *= f.delta[i] ? 1.0 / pi_copy[i] : 0.0;
    return rows;
  };
  out.theta = solve_theta(out.rows_fn, wls_seed(f, f.w, wts), f.n, solver);
  return out;
}

// Corrected sandwich wrt the censoring-model parameters for a weighted fit.
SandwichParts corrected_for_eta(const Flat& f, const RowsFn& rows_fn, const ThetaParams& th,
                                const std::function<Eigen::MatrixXd(const AftParams&)>& rows_of_eta,
                                const AftFit& eta_fit) {
  Eigen::VectorXi rev(f.n);
  for (int i = 0; i < f.n; ++i) rev[i] = 1 - f.delta[i];
  const Eigen::MatrixXd aft_rows = aft_score_rows(f.w, rev, f.reg_eta, eta_fit.params);
  const Eigen::MatrixXd m = aft_info_block(f.w, rev, f.reg_eta, eta_fit.params);
  const Eigen::MatrixXd d = dmean_deta(rows_of_eta, eta_fit.params);
  return sandwich_nuisance_corrected(rows_fn(th), aft_rows, bread_at(rows_fn, th), d, m);
}

}  // namespace

EstimateResult fit_ipw(const Dataset& data, const PiSpec& spec, const SolverConfig& solver) {
  const Flat f = flatten(data);
  IpwPieces pieces = ipw_solve(f, spec, solver);
  SandwichParts parts;
  if (pieces.pi.eta_fit) {
    auto rows_of_eta = [&](const AftParams& eta) {
      Eigen::VectorXd pi, aug;
      pi_from_eta(f, eta, pi, aug);
      Eigen::MatrixXd rows = score_rows_at(f, f.w, pieces.theta);
      for (int i = 0; i < f.n; ++i) rows.row(i) *= f.delta[i] ? 1.0 / pi[i] : 0.0;
      return rows;
    };
    parts = corrected_for_eta(f, pieces.rows_fn, pieces.theta, rows_of_eta, *pieces.pi.eta_fit);
  } else {
    parts = sandwich_plain(pieces.rows_fn(pieces.theta), bread_at(pieces.rows_fn, pieces.theta));
  }
  return finalize(EstimatorId::ipw, pieces.theta, parts, f.n, false,
                  std::move(pieces.pi.eta_fit));
}

EstimateResult fit_aipw(const Dataset& data, const AipwConfig& config) {
  if (config.augmentation == AipwConfig::Augmentation::none) {
    EstimateResult r = fit_ipw(data, config.pi, config.solver);
    r.estimator_id = EstimatorId::aipw;
    return r;
  }
  const Flat f = flatten(data);
  IpwPieces pilot = ipw_solve(f, config.pi, config.solver);

  if (augmentation_vanishes(pilot.pi.aug_weight)) {
    // Degenerate censoring: the augmentation term is numerically absent.
    SandwichParts parts =
        sandwich_plain(pilot.rows_fn(pilot.theta), bread_at(pilot.rows_fn, pilot.theta));
    return finalize(EstimatorId::aipw, pilot.theta, parts, f.n, false,
                    std::move(pilot.pi.eta_fit));
  }

  const Nodes nd = make_nodes(config.quadrature);
  const AftParams gamma = resolve_gamma(f, config.x_given_z, config.solver);
  const ResolvedPi& rp = pilot.pi;

  RowsFn rows_fn;
  Eigen::MatrixXd psi_frozen;  // closed_with_lambda keeps Psi fixed at the pilot

  const bool eff = config.augmentation == AipwConfig::Augmentation::eff;
  if (config.augmentation == AipwConfig::Augmentation::closed_with_lambda) {
    const Eigen::MatrixXd psi = psi_closed_rows(f, pilot.theta, gamma, nd);
    const Eigen::MatrixXd base = pilot.rows_fn(pilot.theta);
    Eigen::MatrixXd aug_rows = rp.aug_weight.asDiagonal() * psi;
    Eigen::MatrixXd base_rows = base;
    if (rp.eta_fit) {
      // AFT-corrected Lambda blocks: a_i += A*_aipw Ups_i, b_i += A*_ipw Ups_i.
      Eigen::VectorXi rev(f.n);
      for (int i = 0; i < f.n; ++i) rev[i] = 1 - f.delta[i];
      const Eigen::MatrixXd aft_rows = aft_score_rows(f.w, rev, f.reg_eta, rp.eta_fit->params);
      const Eigen::MatrixXd m = aft_info_block(f.w, rev, f.reg_eta, rp.eta_fit->params);
      const Eigen::MatrixXd minv =
          guarded_inverse<SingularNuisanceInformation>(m, "lambda: singular AFT information");
      const Eigen::MatrixXd ups = aft_rows * minv.transpose();
      auto a_of_eta = [&](const AftParams& eta) -> Eigen::MatrixXd {
        Eigen::VectorXd pi, aug;
        pi_from_eta(f, eta, pi, aug);
        return aug.asDiagonal() * psi;
      };
      auto b_of_eta = [&](const AftParams& eta) -> Eigen::MatrixXd {
        Eigen::VectorXd pi, aug;
        pi_from_eta(f, eta, pi, aug);
        Eigen::MatrixXd rows = score_rows_at(f, f.w, pilot.theta);
        for (int i = 0; i < f.n; ++i) rows.row(i) *= f.delta[i] ? 1.0 / pi[i] : 0.0;
        return rows;
      };
      aug_rows += ups * dmean_deta(a_of_eta, rp.eta_fit->params).transpose();
      base_rows += ups * dmean_deta(b_of_eta, rp.eta_fit->params).transpose();
    }
    const Eigen::MatrixXd lambda = lambda_matrix(aug_rows, base_rows);
    psi_frozen = psi * lambda.transpose();
    rows_fn = [&f, &rp, psi_frozen](const ThetaParams& th) {
      Eigen::MatrixXd rows = score_rows_at(f, f.w, th);
      for (int i = 0; i < f.n; ++i) rows.row(i) *= f.delta[i] ? 1.0 / rp.pi[i] : 0.0;
      rows += rp.aug_weight.asDiagonal() * psi_frozen;
      return rows;
    };
  } else {
    const AftParams eta_for_psi = rp.eta ? *rp.eta : AftParams{};
    if (eff && !rp.eta)
      throw ConfigError("aipw eff: pi must come from a censoring model, not raw weights");
    rows_fn = [&f, &rp, &gamma, &nd, eff, eta_for_psi](const ThetaParams& th) {
      Eigen::MatrixXd rows = score_rows_at(f, f.w, th);
      for (int i = 0; i < f.n; ++i) {
        const double wt = f.delta[i] ? 1.0 / rp.pi[i] : 0.0;
        rows.row(i) *= wt;
        const CondScore cs = cond_score_row(f, i, 0.0, th, gamma_eval(f, i, gamma), nd,
                                            eff ? &eta_for_psi : nullptr, eff);
        rows.row(i) += rp.aug_weight[i] * (eff ? cs.eff : cs.plain).transpose();
      }
      return rows;
    };
  }

  const ThetaParams th = solve_theta(rows_fn, pilot.theta, f.n, config.solver);

  SandwichParts parts;
  if (rp.eta_fit) {
    auto rows_of_eta = [&](const AftParams& eta) -> Eigen::MatrixXd {
      Eigen::VectorXd pi, aug;
      pi_from_eta(f, eta, pi, aug);
      Eigen::MatrixXd rows = score_rows_at(f, f.w, th);
      for (int i = 0; i < f.n; ++i) {
        const double wt = f.delta[i] ? 1.0 / pi[i] : 0.0;
        rows.row(i) *= wt;
        if (config.augmentation == AipwConfig::Augmentation::closed_with_lambda) {
          rows.row(i) += aug[i] * psi_frozen.row(i);
        } else {
          const CondScore cs = cond_score_row(f, i, 0.0, th, gamma_eval(f, i, gamma), nd,
                                              eff ? &eta : nullptr, eff);
          rows.row(i) += aug[i] * (eff ? cs.eff : cs.plain).transpose();
        }
      }
      return rows;
    };
    parts = corrected_for_eta(f, rows_fn, th, rows_of_eta, *rp.eta_fit);
  } else {
    parts = sandwich_plain(rows_fn(th), bread_at(rows_fn, th));
  }
  return finalize(EstimatorId::aipw, th, parts, f.n, false, std::move(pilot.pi.eta_fit));
}

EstimateResult fit_mle(const Dataset& data, const GammaSpec& gamma_spec,
                       const QuadratureRule& rule, const SolverConfig& solver) {
  const Flat f = flatten(data);
  std::optional<AftFit> gamma_fit;
  const AftParams gamma = resolve_gamma(f, gamma_spec, solver, &gamma_fit);
  const Nodes nd = make_nodes(rule);

  auto rows_for = [&f, &nd](const ThetaParams& th, const AftParams& g) {
    Eigen::MatrixXd rows(f.n, f.p());
    Eigen::VectorXd buf(f.p());
    for (int i = 0; i < f.n; ++i) {
      if (f.delta[i]) {
        score_into(f.y[i], f.reg(i, f.w[i]), f.z.row(i), th, buf);
        rows.row(i) = buf;
      } else {
        rows.row(i) =
            cond_score_row(f, i, f.w[i], th, gamma_eval(f, i, g), nd, nullptr, false).plain;
      }
    }
    return rows;
  };
  auto rows_fn = [&](const ThetaParams& th) { return rows_for(th, gamma); };

  Dataset kept;
  for (const Observation& o : data)
    if (o.delta) kept.push_back(o);
  if (static_cast<int>(kept.size()) < f.p() + 2)
    throw TooFewComplete("fit_mle: too few uncensored rows for a starting value");
  const Flat fk = flatten(kept);
  const ThetaParams start = wls_seed(fk, fk.w, Eigen::VectorXd::Ones(fk.n));

  const ThetaParams th = solve_theta(rows_fn, start, f.n, solver);

  SandwichParts parts;
  if (gamma_fit) {
    const Eigen::MatrixXd aft_rows = aft_score_rows(f.w, f.delta, f.reg_gamma, gamma_fit->params);
    const Eigen::MatrixXd m = aft_info_block(f.w, f.delta, f.reg_gamma, gamma_fit->params);
    const Eigen::MatrixXd d = dmean_deta(
        [&](const AftParams& g) { return rows_for(th, g); }, gamma_fit->params);
    parts = sandwich_nuisance_corrected(rows_fn(th), aft_rows, bread_at(rows_fn, th), d, m);
  } else {
    parts = sandwich_plain(rows_fn(th), bread_at(rows_fn, th));
  }
  return finalize(EstimatorId::mle, th, parts, f.n, false, std::move(gamma_fit));
}

EstimateResult fit_cmi(const Dataset& data, CmiVariant variant, const GammaSpec& gamma_spec,
                       const QuadratureRule& rule, const SolverConfig& solver) {
  const Flat f = flatten(data);
  const AftParams gamma = resolve_gamma(f, gamma_spec, solver);
  const Nodes nd = make_nodes(rule);

  Eigen::VectorXd xvals = f.w;
  ThetaParams th;
  {
    Dataset kept;
    for (const Observation& o : data)
      if (o.delta) kept.push_back(o);
    if (static_cast<int>(kept.size()) < f.p() + 2)
      throw TooFewComplete("fit_cmi: too few uncensored rows");
    const Flat fk = flatten(kept);
    th = wls_seed(fk, fk.w, Eigen::VectorXd::Ones(fk.n));
  }

  auto impute = [&](const ThetaParams& cur) {
    Eigen::VectorXd xv = f.w;
    for (int i = 0; i < f.n; ++i) {
      if (f.delta[i]) continue;
      const GammaEval g = gamma_eval(f, i, gamma);
      if (variant == CmiVariant::given_z) {
        // E[X | Z]: one-dimensional Weibull mean by quadrature
        double num = 0.0, den = 0.0;
        for (int j = 0; j < nd.x.size(); ++j) {
          const double x = nd.x[j];
          if (x <= 0.0) continue;
          const double b = nd.wgt[j] * std::exp(weib_logpdf(x, g));
          den += b;
          num += b * x;
        }
        if (!(den > 1e-300)) throw QuadratureFailure("cmi: f_{X|Z} mass underflow");
        xv[i] = num / den;
      } else {
        xv[i] = cond_score_row(f, i, f.w[i], cur, g, nd, nullptr, false).mean_x;
      }
    }
    return xv;
  };

  const int max_cycles = 100;
  bool settled = false;
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    xvals = impute(th);
    auto rows_fn = [&](const ThetaParams& t) { return score_rows_at(f, xvals, t); };
    const ThetaParams next = solve_theta(rows_fn, th, f.n, solver);
    const double change = (next.to_vector() - th.to_vector()).lpNorm<Eigen::Infinity>();
    th = next;
    if (change < 1e-6 && cycle > 0) {
      settled = true;
      break;
    }
    if (variant == CmiVariant::given_z && cycle > 0) {
      settled = true;  // imputation does not depend on theta
      break;
    }
  }
  if (!settled) throw NonConvergence("fit_cmi: imputation fixed point did not settle");

  auto rows_fn = [&](const ThetaParams& t) { return score_rows_at(f, xvals, t); };
  const EstimatorId id =
      variant == CmiVariant::given_z ? EstimatorId::cmi_given_z : EstimatorId::cmi_given_yz;
  return finalize(id, th, sandwich_plain(rows_fn(th), bread_at(rows_fn, th)), f.n, true);
}

namespace {

EstimateResult fit_acc_like(const Dataset& data, const PiSpec& pi_spec, bool use_lambda,
                            const GammaSpec& gamma_spec, const QuadratureRule& rule,
                            const SolverConfig& solver, bool modified) {
  const Flat f = flatten(data);
  IpwPieces pilot = ipw_solve(f, pi_spec, solver);
  const ResolvedPi& rp = pilot.pi;
  const Nodes nd = make_nodes(rule);
  const AftParams gamma = resolve_gamma(f, gamma_spec, solver);

  // Augmentation factor: MACC uses 1 - delta/pi; ACC uses delta - pi_{Y,Z}.
  Eigen::VectorXd factor(f.n);
  if (modified) {
    factor = rp.aug_weight;
  } else {
    if (!rp.eta) throw ConfigError("fit_acc: pi must come from a censoring model");
    for (int i = 0; i < f.n; ++i) {
      const CondScore cs =
          cond_score_row(f, i, 0.0, pilot.theta, gamma_eval(f, i, gamma), nd, &*rp.eta, false);
      factor[i] = f.delta[i] - cs.mean_pi;
    }
  }

  Eigen::MatrixXd psi = psi_closed_rows(f, pilot.theta, gamma, nd);
  if (augmentation_vanishes(factor)) {
    psi.setZero();
  } else if (use_lambda) {
    Eigen::MatrixXd base = score_rows_at(f, f.w, pilot.theta);
    for (int i = 0; i < f.n; ++i)
      if (!f.delta[i]) base.row(i).setZero();
    const Eigen::MatrixXd lambda = lambda_matrix(factor.asDiagonal() * psi, base);
    psi = psi * lambda.transpose();
  }

  auto rows_fn = [&](const ThetaParams& th) {
    Eigen::MatrixXd rows = score_rows_at(f, f.w, th);
    for (int i = 0; i < f.n; ++i)
      if (!f.delta[i]) rows.row(i).setZero();
    rows += factor.asDiagonal() * psi;
    return rows;
  };
  const ThetaParams th = solve_theta(rows_fn, pilot.theta, f.n, solver);
  SandwichParts parts = sandwich_plain(rows_fn(th), bread_at(rows_fn, th));
  return finalize(modified ? EstimatorId::macc : EstimatorId::acc, th, parts, f.n, true,
                  std::move(pilot.pi.eta_fit));
}

}  // namespace

EstimateResult fit_acc(const Dataset& data, const PiSpec& pi, bool use_lambda,
                       const GammaSpec& gamma, const QuadratureRule& rule,
                       const SolverConfig& solver) {
  return fit_acc_like(data, pi, use_lambda, gamma, rule, solver, false);
}

EstimateResult fit_macc(const Dataset& data, const PiSpec& pi, bool use_lambda,
                        const GammaSpec& gamma, const QuadratureRule& rule,
                        const SolverConfig& solver) {
  return fit_acc_like(data, pi, use_lambda, gamma, rule, solver, true);
}

}  // namespace cct
