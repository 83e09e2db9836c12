#include "cct/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cct/errors.hpp"

namespace cct {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(trim(cur));
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

int CsvTable::require(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw ParseError("missing column: " + name);
  return c;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  t.header = split(line, ',');
  int rownum = 1;
  while (std::getline(in, line)) {
    ++rownum;
    if (trim(line).empty()) continue;
    const std::vector<std::string> parts = split(line, ',');
    if (parts.size() != t.header.size())
      throw ParseError(path + ": row " + std::to_string(rownum) + " has " +
                       std::to_string(parts.size()) + " fields, expected " +
                       std::to_string(t.header.size()));
    std::vector<double> vals(parts.size());
    for (size_t c = 0; c < parts.size(); ++c) {
      if (parts[c].empty()) {
        vals[c] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      try {
        size_t used = 0;
        vals[c] = std::stod(parts[c], &used);
        if (used != parts[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(path + ": row " + std::to_string(rownum) + ", column '" +
                         t.header[c] + "': not a number: " + parts[c]);
      }
    }
    t.rows.push_back(std::move(vals));
  }
  return t;
}

Dataset dataset_from_csv(const CsvTable& table, const DatasetColumns& cols) {
  const int cy = table.require(cols.outcome);
  const int cw = table.require(cols.time);
  const int cd = table.require(cols.status);
  std::vector<int> cz;
  for (const std::string& name : cols.covariates) cz.push_back(table.require(name));
  const int ca = cols.anchor.empty() ? -1 : table.require(cols.anchor);
  const int cx = cols.latent_x.empty() ? -1 : table.require(cols.latent_x);
  const int cc = cols.latent_c.empty() ? -1 : table.require(cols.latent_c);

  Dataset data;
  data.reserve(table.rows.size());
  int rownum = 1;
  for (const auto& row : table.rows) {
    ++rownum;
    Observation o;
    o.y = row[cy];
    o.w = row[cw];
    const double d = row[cd];
    if (d != 0.0 && d != 1.0)
      throw ParseError("status column: row " + std::to_string(rownum) +
                       " value must be 0 or 1");
    o.delta = static_cast<int>(d);
    o.z.resize(cz.size());
    for (size_t k = 0; k < cz.size(); ++k) o.z[k] = row[cz[k]];
    if (ca >= 0 && std::isfinite(row[ca])) o.anchor = row[ca];
    if (cx >= 0 && std::isfinite(row[cx])) o.latent_x = row[cx];
    if (cc >= 0 && std::isfinite(row[cc])) o.latent_c = row[cc];
    if (!(o.w > 0.0))
      throw ParseError("time column: row " + std::to_string(rownum) + " must be positive");
    data.push_back(std::move(o));
  }
  return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  const int q = data.empty() ? 0 : static_cast<int>(data[0].z.size());
  out << "y,w,delta";
  for (int k = 0; k < q; ++k) out << ",z" << (k + 1);
  out << ",anchor,latent_x,latent_c\n";
  for (const Observation& o : data) {
    out << fmt(o.y) << ',' << fmt(o.w) << ',' << o.delta;
    for (int k = 0; k < q; ++k) out << ',' << fmt(o.z[k]);
    out << ',' << (o.anchor ? fmt(*o.anchor) : "");
    out << ',' << (o.latent_x ? fmt(*o.latent_x) : "");
    out << ',' << (o.latent_c ? fmt(*o.latent_c) : "");
    out << '\n';
  }
}

Dataset read_dataset_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  DatasetColumns cols;
  cols.outcome = "y";
  cols.time = "w";
  cols.status = "delta";
  for (const std::string& h : t.header)
    if (h.rfind("z", 0) == 0 && h.size() > 1 && std::isdigit(static_cast<unsigned char>(h[1])))
      cols.covariates.push_back(h);
  if (t.column("anchor") >= 0) cols.anchor = "anchor";
  if (t.column("latent_x") >= 0) cols.latent_x = "latent_x";
  if (t.column("latent_c") >= 0) cols.latent_c = "latent_c";
  return dataset_from_csv(t, cols);
}

void write_report_csv(const std::string& path, const ScenarioReport& report) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  out << "estimator,specification,coefficient,percent_bias,mean_se,empirical_sd,"
         "coverage,n,replications,censoring_rate,failures\n";
  for (const CellReport& c : report.cells) {
    const std::string key = c.estimator + ":" + c.specification;
    const auto fit = report.failures.find(key);
    out << c.estimator << ',' << c.specification << ',' << c.coefficient << ','
        << fmt(c.percent_bias) << ',' << fmt(c.mean_se) << ',' << fmt(c.empirical_sd) << ','
        << fmt(c.coverage) << ',' << report.n << ',' << report.replications << ','
        << fmt(report.censoring_rate) << ','
        << (fit == report.failures.end() ? 0 : fit->second) << '\n';
  }
}

void write_report_json(const std::string& path, const ScenarioReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["replications"] = report.replications;
  j["censoring_rate"] = report.censoring_rate;
  j["realized_censoring"] = report.realized_censoring;
  j["failures"] = report.failures;
  auto& cells = j["cells"];
  for (const CellReport& c : report.cells) {
    cells.push_back({{"estimator", c.estimator},
                     {"specification", c.specification},
                     {"coefficient", c.coefficient},
                     {"percent_bias", c.percent_bias},
                     {"mean_se", c.mean_se},
                     {"empirical_sd", c.empirical_sd},
                     {"coverage", c.coverage}});
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

std::string render_report_table(const ScenarioReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %-11s %-8s %10s %8s %8s %8s\n", "estimator",
                "spec", "coef", "bias(x100)", "SE(x100)", "SD(x100)", "cov(%)");
  os << buf;
  for (const CellReport& c : report.cells) {
    std::snprintf(buf, sizeof(buf), "%-14s %-11s %-8s %10.2f %8.2f %8.2f %8.2f\n",
                  c.estimator.c_str(), c.specification.c_str(), c.coefficient.c_str(),
                  c.percent_bias, c.mean_se, c.empirical_sd, c.coverage);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "realized censoring: %.4f\n", report.realized_censoring);
  os << buf;
  for (const auto& [key, fails] : report.failures)
    if (fails > 0) os << "failures " << key << ": " << fails << "\n";
  return os.str();
}

ScenarioConfig read_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&](const std::string& key, double dflt) {
    auto v = take(key);
    if (!v) return dflt;
    try {
      return std::stod(*v);
    } catch (const std::exception&) {
      throw ConfigError("config field '" + key + "': not a number: " + *v);
    }
  };

  ScenarioConfig cfg;
  cfg.n = static_cast<int>(num("n", cfg.n));
  cfg.replications = static_cast<int>(num("replications", cfg.replications));
  cfg.seed = static_cast<std::uint64_t>(num("seed", 1));
  cfg.quadrature_nodes = static_cast<int>(num("quadrature_nodes", cfg.quadrature_nodes));
  cfg.threads = static_cast<int>(num("threads", 0));
  cfg.theta_true.beta0 = num("beta0", 1.0);
  cfg.theta_true.beta_x = num("beta_x", 1.0);
  cfg.theta_true.beta_z = Eigen::VectorXd::Constant(1, num("beta_z", 1.0));
  cfg.theta_true.sigma = num("sigma", 1.0);
  cfg.gamma_true.coefficients = Eigen::Vector2d(num("gamma0", 0.1), num("gamma_z", 0.1));
  cfg.gamma_true.log_scale = std::log(num("gamma_sigma", 1.5));
  cfg.eta_true.coefficients =
      Eigen::Vector3d(num("eta0", 0.0), num("eta_y", 0.5), num("eta_z", 0.5));
  cfg.eta_true.log_scale = std::log(num("eta_sigma", 1.5));
  cfg.a_mean = num("a_mean", 2.0);
  cfg.a_sd = num("a_sd", 1.0);
  cfg.target_censoring = num("target_censoring", -1.0);
  cfg.incorrect_gamma_sigma = num("incorrect_gamma_sigma", 1.2);

  if (auto est = take("estimators")) {
    for (std::string& item : split(*est, ';')) {
      const std::string entry = trim(item);
      if (entry.empty()) continue;
      EstimatorSpec spec;
      const auto colon = entry.find(':');
      spec.name = trim(entry.substr(0, colon));
      if (colon != std::string::npos) {
        const std::string s = trim(entry.substr(colon + 1));
        if (s == "correct")
          spec.spec = Specification::correct;
        else if (s == "estimated")
          spec.spec = Specification::estimated;
        else if (s == "incorrect")
          spec.spec = Specification::incorrect;
        else
          throw ConfigError("config: unknown specification '" + s + "'");
      }
      cfg.estimators.push_back(spec);
    }
  }
  if (!kv.empty()) throw ConfigError("config: unknown key '" + kv.begin()->first + "'");
  cfg.validate();
  return cfg;
}

}  // namespace cct
