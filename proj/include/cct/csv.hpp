#pragma once

#include <map>
#include <string>
#include <vector>

#include "cct/simulation.hpp"
#include "cct/types.hpp"

namespace cct {

/// Comma-separated table with a header row; all fields numeric except where
/// noted. Throws ParseError with row/column context.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
  int require(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

/// Column mapping used to build a Dataset from a CSV file.
struct DatasetColumns {
  std::string outcome;
  std::string time;
  std::string status;
  std::vector<std::string> covariates;
  std::string anchor;    // optional, empty = absent
  std::string latent_x;  // optional
  std::string latent_c;  // optional
};

Dataset dataset_from_csv(const CsvTable& table, const DatasetColumns& cols);

/// Dataset writer with 17 significant digits (round-trip exact).
void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

void write_report_csv(const std::string& path, const ScenarioReport& report);
void write_report_json(const std::string& path, const ScenarioReport& report);
std::string render_report_table(const ScenarioReport& report);

/// Flat key = value configuration file (# comments). Unknown keys rejected.
ScenarioConfig read_scenario_config(const std::string& path);

}  // namespace cct
