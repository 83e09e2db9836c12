#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cct/csv.hpp"
#include "cct/errors.hpp"
#include "cct/estimators.hpp"
#include "cct/simulation.hpp"

namespace fs = std::filesystem;
using namespace cct;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct FitOptions {
  std::string input, outcome, time_col, status, out;
  std::vector<std::string> covariates;
  std::string estimator = "ipw";
  std::string pi = "fitted";
  std::string pi_column;
  std::string augmentation = "closed-lambda";
  std::string anchor_col, latent_x_col, latent_c_col;
  int quadrature_nodes = 64;
};

EstimateResult dispatch_fit(const FitOptions& opt, const Dataset& data) {
  const QuadratureRule rule = QuadratureRule::semi_infinite(opt.quadrature_nodes);
  const GammaSpec gamma = GammaSpec::from_fit();
  const PiSpec pi = PiSpec::from_fit();

  const std::string& e = opt.estimator;
  if (e == "oracle") return fit_oracle(data);
  if (e == "naive") return fit_naive(data);
  if (e == "cc") return fit_cc(data);
  if (e == "cmi-z") return fit_cmi(data, CmiVariant::given_z, gamma, rule);
  if (e == "cmi-yz") return fit_cmi(data, CmiVariant::given_y_z_censored, gamma, rule);
  if (e == "acc") return fit_acc(data, pi, false, gamma, rule);
  if (e == "acc-lambda") return fit_acc(data, pi, true, gamma, rule);
  if (e == "macc") return fit_macc(data, pi, false, gamma, rule);
  if (e == "macc-lambda") return fit_macc(data, pi, true, gamma, rule);
  if (e == "ipw") return fit_ipw(data, pi);
  if (e == "mle") return fit_mle(data, gamma, rule);
  if (e == "aipw") {
    AipwConfig cfg;
    cfg.pi = pi;
    cfg.x_given_z = gamma;
    cfg.quadrature = rule;
    if (opt.augmentation == "eff")
      cfg.augmentation = AipwConfig::Augmentation::eff;
    else if (opt.augmentation == "closed")
      cfg.augmentation = AipwConfig::Augmentation::closed;
    else if (opt.augmentation == "closed-lambda")
      cfg.augmentation = AipwConfig::Augmentation::closed_with_lambda;
    else
      throw ConfigError("--augmentation must be eff, closed or closed-lambda");
    return fit_aipw(data, cfg);
  }
  throw ConfigError("unknown estimator: " + e);
}

std::string render_fit_report(const FitOptions& opt, const EstimateResult& r) {
  std::ostringstream os;
  char buf[256];
  os << "estimator: " << estimator_name(r.estimator_id) << "\n";
  os << "n_used: " << r.n_used << "\n";
  os << "converged: " << (r.converged ? "yes" : "no") << "\n";
  os << "inconsistent_under_outcome_dependent_censoring: "
     << (r.inconsistent_under_outcome_dependent_censoring ? "yes" : "no") << "\n";
  std::vector<std::string> names{"(intercept)", opt.time_col};
  for (const std::string& c : opt.covariates) names.push_back(c);
  names.push_back("sigma");
  const Eigen::VectorXd est = r.theta.to_vector();
  std::snprintf(buf, sizeof(buf), "%-16s %12s %12s %12s %12s\n", "coefficient", "estimate",
                "std_error", "ci_lower", "ci_upper");
  os << buf;
  for (int k = 0; k < est.size(); ++k) {
    const double se = r.std_errors[k];
    std::snprintf(buf, sizeof(buf), "%-16s %12.6f %12.6f %12.6f %12.6f\n", names[k].c_str(),
                  est[k], se, est[k] - 1.959963984540054 * se,
                  est[k] + 1.959963984540054 * se);
    os << buf;
  }
  return os.str();
}

int cmd_fit(const FitOptions& opt) {
  try {
    const CsvTable table = read_csv(opt.input);
    DatasetColumns cols;
    cols.outcome = opt.outcome;
    cols.time = opt.time_col;
    cols.status = opt.status;
    cols.covariates = opt.covariates;
    cols.anchor = opt.anchor_col;
    cols.latent_x = opt.latent_x_col;
    cols.latent_c = opt.latent_c_col;
    Dataset data = dataset_from_csv(table, cols);

    EstimateResult result;
    if (opt.pi == "supplied") {
      if (opt.pi_column.empty()) throw ConfigError("--pi supplied requires --pi-column");
      if (opt.estimator != "ipw")
        throw ConfigError("--pi supplied is only available for --estimator ipw");
      const int cp = table.require(opt.pi_column);
      Eigen::VectorXd pi(static_cast<int>(table.rows.size()));
      for (int i = 0; i < pi.size(); ++i) pi[i] = table.rows[i][cp];
      result = fit_ipw(data, PiSpec::from_probabilities(pi));
    } else if (opt.pi == "fitted") {
      result = dispatch_fit(opt, data);
    } else {
      throw ConfigError("--pi must be fitted or supplied");
    }

    const std::string report = render_fit_report(opt, result);
    std::ofstream out(opt.out);
    if (!out) throw ParseError("cannot write " + opt.out);
    out << report;
    std::cout << report;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  try {
    const ScenarioConfig cfg = read_scenario_config(config_path);
    fs::create_directories(out_dir);
    const ScenarioReport report = run_scenario(cfg);
    write_report_csv(out_dir + "/report.csv", report);
    write_report_json(out_dir + "/summary.json", report);
    std::cout << render_report_table(report);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int cmd_sweep(const std::string& config_path, const std::string& rates_arg,
              const std::string& out_dir) {
  try {
    const ScenarioConfig cfg = read_scenario_config(config_path);
    std::vector<double> rates;
    std::stringstream ss(rates_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      rates.push_back(std::stod(item));
    }
    if (rates.empty()) throw ConfigError("--rates produced an empty list");
    fs::create_directories(out_dir);
    const std::vector<ScenarioReport> reports = sweep_censoring(cfg, rates);
    std::ofstream combined(out_dir + "/combined.csv");
    combined << "estimator,specification,coefficient,percent_bias,mean_se,empirical_sd,"
                "coverage,n,replications,censoring_rate,failures\n";
    for (size_t i = 0; i < reports.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s/rate_%02d.csv", out_dir.c_str(),
                    static_cast<int>(std::lround(rates[i] * 100)));
      write_report_csv(name, reports[i]);
      std::ifstream part(name);
      std::string line;
      std::getline(part, line);  // skip header
      while (std::getline(part, line)) combined << line << '\n';
      std::cout << "censoring rate " << rates[i] << ":\n"
                << render_report_table(reports[i]) << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimators for linear regression with an outcome-dependently "
               "right-censored covariate"};
  app.require_subcommand(1);

  FitOptions fit_opt;
  CLI::App* fit = app.add_subcommand("fit", "fit one estimator on a CSV file");
  fit->add_option("--input", fit_opt.input)->required();
  fit->add_option("--outcome", fit_opt.outcome)->required();
  fit->add_option("--time", fit_opt.time_col)->required();
  fit->add_option("--status", fit_opt.status)->required();
  fit->add_option("--covariates", fit_opt.covariates)->delimiter(',')->required();
  fit->add_option("--estimator", fit_opt.estimator)->required();
  fit->add_option("--pi", fit_opt.pi);
  fit->add_option("--pi-column", fit_opt.pi_column);
  fit->add_option("--augmentation", fit_opt.augmentation);
  fit->add_option("--anchor", fit_opt.anchor_col);
  fit->add_option("--latent-x", fit_opt.latent_x_col);
  fit->add_option("--latent-c", fit_opt.latent_c_col);
  fit->add_option("--quadrature-nodes", fit_opt.quadrature_nodes);
  fit->add_option("--out", fit_opt.out)->required();

  std::string sim_config, sim_out;
  CLI::App* sim = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  sim->add_option("--config", sim_config)->required();
  sim->add_option("--out", sim_out)->required();

  std::string sweep_config, sweep_rates, sweep_out;
  CLI::App* sw = app.add_subcommand("sweep", "run a censoring-rate sweep");
  sw->add_option("--config", sweep_config)->required();
  sw->add_option("--rates", sweep_rates)->required();
  sw->add_option("--out", sweep_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (fit->parsed()) return cmd_fit(fit_opt);
  if (sim->parsed()) return cmd_simulate(sim_config, sim_out);
  if (sw->parsed()) return cmd_sweep(sweep_config, sweep_rates, sweep_out);
  return kExitUsage;
}
