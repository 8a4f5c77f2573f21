#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tpel/el_complete.hpp"
#include "tpel/mc_harness.hpp"

namespace tpel {

/// Column order of the simulation CSV report.
const std::vector<std::string>& report_csv_columns(bool include_timing);

nlohmann::json to_json(const Scenario& scenario);

/// Scenario fields, coverage, stderr, mean LCR and failures by kind. The
/// wall time is omitted unless requested so that reports are reproducible
/// byte for byte.
nlohmann::json to_json(const SimulationReport& report, bool include_timing = false);

/// Statistic (null when +inf), dof, critical value, p-value, decision,
/// multiplier, profiled beta and diagnostics.
nlohmann::json to_json(const ELTestResult& result);

nlohmann::json to_json(const RegionSummary& region);

nlohmann::json to_json(const Eigen::VectorXd& v);
nlohmann::json to_json(const Eigen::MatrixXd& m);

/// One header row and one row per report.
std::string reports_to_csv(const std::vector<SimulationReport>& reports, bool include_timing = false);

/// Writes `content` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial report. Throws std::runtime_error
/// on I/O failure.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace tpel
