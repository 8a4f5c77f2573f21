#include "tpel/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tpel {

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string failures_field(const SimulationReport& report) {
  std::string out;
  for (const auto& [kind, count] : report.failures) {
    if (!out.empty()) out += ';';
    out += std::string(to_string(kind)) + "=" + std::to_string(count);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& report_csv_columns(bool include_timing) {
  static const std::vector<std::string> base = {
      "model",     "error_case", "study",    "method",   "n",         "k",        "alpha",    "replications",
      "base_seed", "pi_source",  "completed", "coverage", "mc_stderr", "mean_lcr", "lcr_count", "failures"};
  static const std::vector<std::string> timed = [] {
    auto v = base;
    v.push_back("wall_time");
    return v;
  }();
  return include_timing ? timed : base;
}

nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(finite_or_null(v[i]));
  return out;
}

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(finite_or_null(m(r, c)));
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::json to_json(const Scenario& s) {
  return {{"model", to_string(s.model)},
          {"error_case", to_string(s.error_case)},
          {"study", to_string(s.study)},
          {"method", to_string(s.method)},
          {"n", s.n},
          {"k", s.k},
          {"alpha", s.alpha},
          {"replications", s.replications},
          {"base_seed", s.base_seed},
          {"lcr_replications", s.lcr_replications},
          {"noise_scale", s.noise_scale},
          {"pi_source", s.pi_source == PiSource::Known ? "known" : "kernel"}};
}

nlohmann::json to_json(const SimulationReport& r, bool include_timing) {
  nlohmann::json failures = nlohmann::json::object();
  for (const auto& [kind, count] : r.failures) failures[std::string(to_string(kind))] = count;
  nlohmann::json out = {{"scenario", to_json(r.scenario)},
                        {"completed", r.completed},
                        {"covered", r.covered},
                        {"coverage", r.coverage},
                        {"mc_stderr", r.mc_stderr},
                        {"mean_lcr", r.lcr_count > 0 ? nlohmann::json(r.mean_lcr) : nlohmann::json(nullptr)},
                        {"lcr_count", r.lcr_count},
                        {"failures", failures}};
  if (include_timing) out["wall_time"] = r.wall_time;
  return out;
}

nlohmann::json to_json(const ELTestResult& r) {
  nlohmann::json out = {{"statistic", finite_or_null(r.statistic)},
                        {"dof", r.dof},
                        {"critical", r.critical},
                        {"p_value", r.p_value},
                        {"reject", r.reject},
                        {"hull_violation", r.hull_violation},
                        {"lambda_hat", to_json(r.lambda_hat)},
                        {"beta_hat", to_json(r.beta_hat_profile)},
                        {"sign_flipped", r.sign_flipped},
                        {"profile_iterations", r.profile_iterations},
                        {"start_index", r.start_index}};
  nlohmann::json diag = {{"psi", to_json(r.diagnostics.psi)},
                         {"S", to_json(r.diagnostics.S)},
                         {"score1", to_json(r.score1)},
                         {"score2", to_json(r.score2)},
                         {"weights_available", r.weights_available}};
  if (r.weights_available) {
    diag["weight_sum_first"] = r.weights_I.sum();
    diag["weight_sum_second"] = r.weights_J.sum();
  }
  out["diagnostics"] = std::move(diag);
  return out;
}

nlohmann::json to_json(const RegionSummary& s) {
  nlohmann::json capped = nlohmann::json::array();
  for (bool c : s.capped) capped.push_back(c);
  return {{"center", to_json(s.center)}, {"lower", to_json(s.lower)},     {"upper", to_json(s.upper)},
          {"widths", to_json(s.widths)}, {"lcr", s.lcr},                  {"critical", s.critical},
          {"degenerate", s.degenerate},  {"capped", capped},              {"evaluations", s.evaluations}};
}

std::string reports_to_csv(const std::vector<SimulationReport>& reports, bool include_timing) {
  std::ostringstream os;
  const auto& cols = report_csv_columns(include_timing);
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << '\n';
  for (const auto& r : reports) {
    const Scenario& s = r.scenario;
    os << to_string(s.model) << ',' << to_string(s.error_case) << ',' << to_string(s.study) << ','
       << to_string(s.method) << ',' << s.n << ',' << s.k << ',' << csv_number(s.alpha) << ',' << s.replications
       << ',' << s.base_seed << ',' << (s.pi_source == PiSource::Known ? "known" : "kernel") << ',' << r.completed
       << ',' << csv_number(r.coverage) << ',' << csv_number(r.mc_stderr) << ','
       << (r.lcr_count > 0 ? csv_number(r.mean_lcr) : "") << ',' << r.lcr_count << ',' << failures_field(r);
    if (include_timing) os << ',' << csv_number(r.wall_time);
    os << '\n';
  }
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw std::runtime_error("cannot move report into place at '" + path + "': " + ec.message());
  }
}

}  // namespace tpel
