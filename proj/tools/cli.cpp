#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "tpel/el_complete.hpp"
#include "tpel/el_missing.hpp"
#include "tpel/errors.hpp"
#include "tpel/mc_harness.hpp"
#include "tpel/model.hpp"
#include "tpel/report.hpp"

namespace el_cli {

namespace {

// --help output; not an error, exit code 0.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string_view command_name(Command c) {
  switch (c) {
    case Command::Test:
      return "test";
    case Command::Region:
      return "region";
    case Command::Simulate:
      return "simulate";
  }
  return "unknown";
}

struct KeySpec {
  const char* name;
  const char* help;
  bool flag = false;
};

const std::vector<KeySpec>& keys_for(Command c) {
  static const std::vector<KeySpec> test = {
      {"input", "CSV file (x1..xp,y[,delta]) or builtin:<model>:<case>[:<study>]"},
      {"model", "regression model id"},
      {"k", "change index: rows 1..k form the first phase"},
      {"delta0", "hypothesized beta - beta1, comma separated"},
      {"alpha", "test level in (0, 1)"},
      {"method", "complete | complete-case | weighted | imputed"},
      {"pi-mode", "kernel | known-spec"},
      {"pi-spec", "known selection probability: s1 | s2 | s3 | constant"},
      {"bandwidths", "kernel bandwidths h1,h2"},
      {"seed", "seed for built-in data"},
      {"n", "sample size for built-in data"},
      {"noise-scale", "error multiplier for built-in data"},
      {"output", "report path (default: standard output)"},
      {"format", "json | csv"},
  };
  static const std::vector<KeySpec> region = [] {
    std::vector<KeySpec> v;
    for (const auto& s : test) {
      if (std::string_view(s.name) != "delta0") v.push_back(s);
    }
    v.push_back({"center", "region center, comma separated (default: difference of the phase fits)"});
    return v;
  }();
  static const std::vector<KeySpec> simulate = {
      {"models", "model1,model2"},
      {"cases", "error cases a,b,c"},
      {"studies", "none,s1,s2,s3"},
      {"methods", "complete,complete-case,weighted,imputed"},
      {"k", "change indices, comma separated"},
      {"n", "sample size"},
      {"alpha", "test level in (0, 1)"},
      {"replications", "replications per cell"},
      {"lcr-replications", "replications per cell that also measure the region length"},
      {"seed", "base seed; replication r uses seed + r"},
      {"pi-mode", "kernel | known-spec (the study's true probabilities)"},
      {"noise-scale", "error multiplier"},
      {"threads", "worker threads (default: EL_THREADS or hardware concurrency)"},
      {"output", "report path (default: standard output)"},
      {"format", "csv | json"},
      {"timing", "include wall time in the report", true},
  };
  switch (c) {
    case Command::Test:
      return test;
    case Command::Region:
      return region;
    case Command::Simulate:
      return simulate;
  }
  return test;
}

/// A raw value and where it came from, for error messages.
struct Raw {
  std::string value;
  std::string source;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

[[noreturn]] void bad(const Raw& raw, const std::string& what) {
  throw UsageError(raw.source + ": " + what + " (got '" + raw.value + "')");
}

double to_double(const Raw& raw) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(raw.value, &pos);
    if (pos == raw.value.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  bad(raw, "expected a finite number");
}

long long to_integer(const Raw& raw) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(raw.value, &pos);
    if (pos == raw.value.size()) return v;
  } catch (const std::exception&) {
  }
  bad(raw, "expected an integer");
}

int to_int(const Raw& raw) {
  const long long v = to_integer(raw);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(raw, "integer out of range");
  return static_cast<int>(v);
}

std::vector<double> to_doubles(const Raw& raw) {
  std::vector<double> out;
  for (const auto& item : split(raw.value, ',')) out.push_back(to_double({item, raw.source}));
  if (out.empty()) bad(raw, "expected a comma-separated list of numbers");
  return out;
}

std::vector<int> to_ints(const Raw& raw) {
  std::vector<int> out;
  for (const auto& item : split(raw.value, ',')) out.push_back(to_int({item, raw.source}));
  if (out.empty()) bad(raw, "expected a comma-separated list of integers");
  return out;
}

std::vector<std::string> to_names(const Raw& raw, const std::set<std::string>& allowed) {
  std::vector<std::string> out;
  for (const auto& item : split(raw.value, ',')) {
    if (!allowed.count(item)) bad(raw, "unknown entry '" + item + "'");
    out.push_back(item);
  }
  if (out.empty()) bad(raw, "expected a comma-separated list");
  return out;
}

std::string to_choice(const Raw& raw, const std::set<std::string>& allowed) {
  if (!allowed.count(raw.value)) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    bad(raw, "expected one of " + list);
  }
  return raw.value;
}

bool to_bool(const Raw& raw) {
  if (raw.value == "true" || raw.value == "1" || raw.value == "yes") return true;
  if (raw.value == "false" || raw.value == "0" || raw.value == "no") return false;
  bad(raw, "expected true or false");
}

const std::set<std::string> kMethods = {"complete", "complete-case", "weighted", "imputed"};

// key=value lines; '#' starts a comment.
std::map<std::string, Raw> read_config(const std::string& path, Command command) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::set<std::string> allowed;
  for (const auto& k : keys_for(command)) allowed.insert(k.name);
  std::map<std::string, Raw> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!allowed.count(key)) {
      throw UsageError(where + ": unknown key '" + key + "' for command '" + std::string(command_name(command)) + "'");
    }
    if (out.count(key)) throw UsageError(where + ": key '" + key + "' given twice");
    out[key] = Raw{trim(line.substr(eq + 1)), where + " (" + key + ")"};
  }
  return out;
}

void apply(RunConfig& cfg, const std::string& key, const Raw& raw) {
  const bool sim = cfg.command == Command::Simulate;
  if (key == "input") {
    cfg.input = raw.value;
  } else if (key == "model") {
    cfg.model_id = raw.value;
  } else if (key == "k") {
    if (sim) {
      cfg.ks = to_ints(raw);
      for (int k : cfg.ks) {
        if (k < 1) bad(raw, "change indices must be >= 1");
      }
    } else {
      cfg.k = to_int(raw);
      if (*cfg.k < 1) bad(raw, "change index must be >= 1");
    }
  } else if (key == "delta0") {
    cfg.delta0 = to_doubles(raw);
  } else if (key == "center") {
    cfg.center = to_doubles(raw);
  } else if (key == "alpha") {
    cfg.alpha = to_double(raw);
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) bad(raw, "alpha must lie in (0, 1)");
  } else if (key == "method") {
    cfg.method = to_choice(raw, kMethods);
  } else if (key == "pi-mode") {
    cfg.pi_mode = to_choice(raw, {"kernel", "known-spec"});
  } else if (key == "pi-spec") {
    cfg.pi_spec = raw.value;
    if (raw.value != "s1" && raw.value != "s2" && raw.value != "s3") {
      const double c = to_double(raw);
      if (!(c > 0.0 && c <= 1.0)) bad(raw, "a constant selection probability must lie in (0, 1]");
    }
  } else if (key == "bandwidths") {
    const auto v = to_doubles(raw);
    if (v.size() != 2 || !(v[0] > 0.0) || !(v[1] > 0.0)) bad(raw, "expected two positive bandwidths h1,h2");
    cfg.bandwidths = std::make_pair(v[0], v[1]);
  } else if (key == "seed") {
    const long long v = to_integer(raw);
    if (v < 0) bad(raw, "seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(v);
  } else if (key == "n") {
    cfg.n = to_int(raw);
    if (cfg.n < 2) bad(raw, "n must be >= 2");
  } else if (key == "noise-scale") {
    cfg.noise_scale = to_double(raw);
    if (cfg.noise_scale < 0.0) bad(raw, "noise scale must be >= 0");
  } else if (key == "output") {
    cfg.output_path = raw.value;
  } else if (key == "format") {
    cfg.format = to_choice(raw, {"json", "csv"});
  } else if (key == "timing") {
    cfg.timing = to_bool(raw);
  } else if (key == "models") {
    cfg.models = to_names(raw, {"model1", "model2"});
  } else if (key == "cases") {
    cfg.cases = to_names(raw, {"a", "b", "c"});
  } else if (key == "studies") {
    cfg.studies = to_names(raw, {"none", "s1", "s2", "s3"});
  } else if (key == "methods") {
    cfg.methods = to_names(raw, kMethods);
  } else if (key == "replications") {
    cfg.replications = to_int(raw);
    if (cfg.replications < 1) bad(raw, "replications must be >= 1");
  } else if (key == "lcr-replications") {
    cfg.lcr_replications = to_int(raw);
    if (cfg.lcr_replications < 0) bad(raw, "lcr-replications must be >= 0");
  } else if (key == "threads") {
    cfg.threads = to_int(raw);
    if (cfg.threads < 0) bad(raw, "threads must be >= 0");
  } else {
    throw UsageError("unhandled key '" + key + "'");
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

void validate(const RunConfig& cfg) {
  if (cfg.command == Command::Simulate) {
    require(!cfg.ks.empty(), "simulate: --k is required");
    for (int k : cfg.ks) require(k < cfg.n, "simulate: every k must be below n = " + std::to_string(cfg.n));
    return;
  }
  require(!cfg.input.empty(), std::string(command_name(cfg.command)) + ": --input is required");
  require(cfg.k.has_value(), std::string(command_name(cfg.command)) + ": --k is required");
  if (cfg.command == Command::Test) require(!cfg.delta0.empty(), "test: --delta0 is required");
  if (cfg.pi_mode == "known-spec") require(!cfg.pi_spec.empty(), "--pi-mode known-spec needs --pi-spec");
  if (cfg.method == "complete") {
    require(cfg.pi_mode == "kernel" && cfg.pi_spec.empty() && !cfg.bandwidths,
            "--pi-mode, --pi-spec and --bandwidths apply to the missing-data methods only");
  }
  if (cfg.pi_mode == "known-spec") require(!cfg.bandwidths, "--bandwidths conflicts with --pi-mode known-spec");
  try {
    tpel::model_by_id(cfg.model_id);
  } catch (const tpel::Error& e) {
    throw UsageError(std::string("--model: ") + e.what());
  }
}

nlohmann::json doubles_json(const std::vector<double>& v) { return nlohmann::json(v); }

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {{"command", command_name(command)}, {"seed", seed}, {"format", format}, {"alpha", alpha}};
  if (!output_path.empty()) j["output"] = output_path;
  if (!config_path.empty()) j["config"] = config_path;
  j["noise_scale"] = noise_scale;
  j["n"] = n;
  if (command == Command::Simulate) {
    j["models"] = models;
    j["cases"] = cases;
    j["studies"] = studies;
    j["methods"] = methods;
    j["k"] = ks;
    j["replications"] = replications;
    j["lcr_replications"] = lcr_replications;
    j["pi_mode"] = pi_mode;
    j["timing"] = timing;
    return j;
  }
  j["input"] = input;
  j["model"] = model_id;
  j["k"] = k ? nlohmann::json(*k) : nlohmann::json(nullptr);
  j["method"] = method;
  if (command == Command::Test) j["delta0"] = doubles_json(delta0);
  if (command == Command::Region && !center.empty()) j["center"] = doubles_json(center);
  if (method != "complete") {
    j["pi_mode"] = pi_mode;
    if (!pi_spec.empty()) j["pi_spec"] = pi_spec;
    if (bandwidths) j["bandwidths"] = {bandwidths->first, bandwidths->second};
  }
  return j;
}

RunConfig parse_run_config(int argc, const char* const* argv) {
  CLI::App app{"Empirical-likelihood tests for the parameter change of a two-phase nonlinear regression"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");

  struct Sub {
    Command command;
    CLI::App* app;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config;
  };
  std::vector<Sub> subs;
  subs.reserve(3);
  const std::pair<Command, const char*> commands[] = {
      {Command::Test, "test one hypothesized delta0"},
      {Command::Region, "per-axis confidence region around the estimated difference"},
      {Command::Simulate, "Monte Carlo coverage study over a scenario grid"}};
  for (const auto& [command, description] : commands) {
    subs.push_back(Sub{command, app.add_subcommand(std::string(command_name(command)), description), {}, {}, {}});
  }
  for (auto& sub : subs) {
    for (const auto& key : keys_for(sub.command)) {
      if (key.flag) {
        sub.options[key.name] = sub.app->add_flag("--" + std::string(key.name), key.help);
      } else {
        sub.options[key.name] = sub.app->add_option("--" + std::string(key.name), sub.values[key.name], key.help);
      }
    }
    sub.app->add_option("--config", sub.config, "key=value file; keys are the long flag names");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  for (auto& sub : subs) {
    if (!sub.app->parsed()) continue;
    RunConfig cfg;
    cfg.command = sub.command;
    cfg.config_path = sub.config;
    std::map<std::string, Raw> raw = sub.config.empty() ? std::map<std::string, Raw>{} : read_config(sub.config, sub.command);
    for (const auto& key : keys_for(sub.command)) {
      CLI::Option* opt = sub.options[key.name];
      if (opt->count() == 0) continue;
      const std::string flag = "--" + std::string(key.name);
      raw[key.name] = Raw{key.flag ? "true" : sub.values[key.name], flag};
    }
    for (const auto& [key, value] : raw) apply(cfg, key, value);
    validate(cfg);
    return cfg;
  }
  throw UsageError("no command given");
}

tpel::Dataset read_csv(const std::string& path, int p, int k) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open input file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw UsageError(path + ": empty file");
  const auto header = split(trim(line), ',');
  const int cols = static_cast<int>(header.size());
  const bool has_delta = cols == p + 2;
  if (cols != p + 1 && !has_delta) {
    throw UsageError(path + ":1: expected " + std::to_string(p + 1) + " or " + std::to_string(p + 2) +
                     " columns (x1..xp,y[,delta]), found " + std::to_string(cols));
  }
  for (int j = 0; j < p; ++j) {
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j + 1)) {
      throw UsageError(path + ":1: column " + std::to_string(j + 1) + " must be named x" + std::to_string(j + 1));
    }
  }
  if (header[static_cast<std::size_t>(p)] != "y" || (has_delta && header[static_cast<std::size_t>(p + 1)] != "delta")) {
    throw UsageError(path + ":1: header must read x1,...,xp,y[,delta]");
  }

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  std::vector<std::uint8_t> deltas;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto fields = split(line, ',');
    if (static_cast<int>(fields.size()) != cols) {
      throw UsageError(where + ": expected " + std::to_string(cols) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> x(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) {
      x[static_cast<std::size_t>(j)] = to_double({fields[static_cast<std::size_t>(j)], where + " (x" + std::to_string(j + 1) + ")"});
    }
    std::uint8_t delta = 1;
    if (has_delta) {
      const std::string& d = fields[static_cast<std::size_t>(p + 1)];
      if (d != "0" && d != "1") throw UsageError(where + ": delta must be 0 or 1 (got '" + d + "')");
      delta = d == "1" ? 1 : 0;
    }
    const std::string& yfield = fields[static_cast<std::size_t>(p)];
    double y = std::numeric_limits<double>::quiet_NaN();
    if (delta == 1) {
      y = to_double({yfield, where + " (y)"});
    } else if (!yfield.empty()) {
      throw UsageError(where + ": y must be empty when delta = 0");
    }
    xs.push_back(std::move(x));
    ys.push_back(y);
    deltas.push_back(delta);
  }
  const int n = static_cast<int>(ys.size());
  if (k >= n) throw UsageError(path + ": k = " + std::to_string(k) + " needs more than k data rows (found " + std::to_string(n) + ")");
  tpel::Dataset data;
  data.k = k;
  data.x.resize(n, p);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) data.x(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    data.y[i] = ys[static_cast<std::size_t>(i)];
  }
  data.delta = std::move(deltas);
  return data;
}

namespace {

constexpr const char* kBuiltinPrefix = "builtin:";

tpel::Dataset load_data(const RunConfig& cfg, const tpel::RegressionModel& model) {
  if (cfg.input.rfind(kBuiltinPrefix, 0) != 0) return read_csv(cfg.input, model.p(), *cfg.k);
  const auto parts = split(cfg.input.substr(std::string(kBuiltinPrefix).size()), ':');
  if (parts.size() < 2 || parts.size() > 3) {
    throw UsageError("--input: built-in data reads builtin:<model>:<case>[:<study>] (got '" + cfg.input + "')");
  }
  if (cfg.model_id != tpel::paper_ratio_model().id()) {
    throw UsageError("--input: built-in data uses the paper-ratio model");
  }
  tpel::Scenario s;
  try {
    s.model = tpel::parse_model_id(parts[0]);
    s.error_case = tpel::parse_error_case(parts[1]);
    s.study = parts.size() == 3 ? tpel::parse_study(parts[2]) : tpel::Study::None;
  } catch (const tpel::Error& e) {
    throw UsageError(std::string("--input: ") + e.what());
  }
  s.method = s.study == tpel::Study::None ? tpel::Method::Complete : tpel::Method::CompleteCase;
  s.n = cfg.n;
  s.k = *cfg.k;
  s.noise_scale = cfg.noise_scale;
  s.replications = 1;
  if (s.k >= s.n) throw UsageError("--k must be below --n for built-in data");
  return tpel::gen_dataset(s, tpel::replication_seed(cfg.seed, 0));
}

tpel::PiSpec pi_spec_of(const RunConfig& cfg) {
  tpel::PiSpec spec;
  if (cfg.pi_mode == "known-spec") {
    spec.source = tpel::PiSource::Known;
    if (cfg.pi_spec == "s1" || cfg.pi_spec == "s2" || cfg.pi_spec == "s3") {
      const tpel::Study study = tpel::parse_study(cfg.pi_spec);
      spec.known1 = [study](const Eigen::VectorXd& x) { return tpel::study_pi(study, tpel::Phase::First, x[0]); };
      spec.known2 = [study](const Eigen::VectorXd& x) { return tpel::study_pi(study, tpel::Phase::Second, x[0]); };
    } else {
      const double c = std::stod(cfg.pi_spec);
      spec.known1 = spec.known2 = [c](const Eigen::VectorXd&) { return c; };
    }
  } else if (cfg.bandwidths) {
    spec.bandwidth1 = cfg.bandwidths->first;
    spec.bandwidth2 = cfg.bandwidths->second;
  }
  return spec;
}

void bandwidth_warnings(const RunConfig& cfg, const tpel::Dataset& data, const tpel::RegressionModel& model,
                        std::ostream& err) {
  if (cfg.method == "complete" || cfg.pi_mode != "kernel") return;
  const int m[2] = {data.k, data.n() - data.k};
  for (int ph = 0; ph < 2; ++ph) {
    const double h = cfg.bandwidths ? (ph == 0 ? cfg.bandwidths->first : cfg.bandwidths->second)
                                    : tpel::default_bandwidth(m[ph]);
    const double v = tpel::bandwidth_condition_value(m[ph], h, model.d());
    if (v >= 1.0) {
      err << "warning: phase " << ph + 1 << " bandwidth " << h << " gives m*h^(4*max(2,d-1)) = " << v
          << "; the kernel estimate's bias condition asks for this to be small\n";
    }
  }
}

tpel::MissingMethod missing_method(const std::string& name) {
  if (name == "complete-case") return tpel::MissingMethod::CompleteCase;
  if (name == "weighted") return tpel::MissingMethod::Weighted;
  return tpel::MissingMethod::Imputed;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string cmd_test(const RunConfig& cfg, std::ostream& err) {
  const tpel::RegressionModel model = tpel::model_by_id(cfg.model_id);
  if (static_cast<int>(cfg.delta0.size()) != model.d()) {
    throw UsageError("--delta0: expected " + std::to_string(model.d()) + " values for model '" + cfg.model_id + "'");
  }
  const tpel::Dataset data = load_data(cfg, model);
  bandwidth_warnings(cfg, data, model, err);
  const Eigen::VectorXd delta0 = to_vector(cfg.delta0);
  tpel::ELTestResult result;
  if (cfg.method == "complete") {
    result = tpel::el_test(data, model, delta0, cfg.alpha);
  } else {
    tpel::MissingOptions opts;
    opts.pi = pi_spec_of(cfg);
    result = tpel::el_test_missing(data, model, delta0, cfg.alpha, missing_method(cfg.method), opts);
  }
  if (cfg.format == "csv") {
    std::ostringstream os;
    os.precision(12);
    os << "statistic,dof,critical,p_value,reject,hull_violation\n";
    if (std::isfinite(result.statistic)) os << result.statistic;
    os << ',' << result.dof << ',' << result.critical << ',' << result.p_value << ',' << (result.reject ? 1 : 0)
       << ',' << (result.hull_violation ? 1 : 0) << '\n';
    return os.str();
  }
  nlohmann::json j = {{"config", cfg.to_json()}, {"result", tpel::to_json(result)}};
  return j.dump(2) + "\n";
}

std::string cmd_region(const RunConfig& cfg, std::ostream& err) {
  const tpel::RegressionModel model = tpel::model_by_id(cfg.model_id);
  if (!cfg.center.empty() && static_cast<int>(cfg.center.size()) != model.d()) {
    throw UsageError("--center: expected " + std::to_string(model.d()) + " values");
  }
  const tpel::Dataset data = load_data(cfg, model);
  bandwidth_warnings(cfg, data, model, err);
  std::optional<Eigen::VectorXd> center;
  if (!cfg.center.empty()) center = to_vector(cfg.center);
  tpel::RegionSummary region;
  if (cfg.method == "complete") {
    region = tpel::region_summary(data, model, cfg.alpha, center);
  } else {
    tpel::MissingOptions opts;
    opts.pi = pi_spec_of(cfg);
    region = tpel::region_summary_missing(data, model, cfg.alpha, missing_method(cfg.method), center, opts);
  }
  if (cfg.format == "csv") {
    std::ostringstream os;
    os.precision(12);
    os << "axis,center,lower,upper,width,capped\n";
    for (Eigen::Index j = 0; j < region.center.size(); ++j) {
      os << j + 1 << ',' << region.center[j] << ',' << region.lower[j] << ',' << region.upper[j] << ','
         << region.widths[j] << ',' << (region.capped[static_cast<std::size_t>(j)] ? 1 : 0) << '\n';
    }
    return os.str();
  }
  nlohmann::json j = {{"config", cfg.to_json()}, {"region", tpel::to_json(region)}};
  return j.dump(2) + "\n";
}

std::string cmd_simulate(const RunConfig& cfg, std::ostream& err) {
  std::vector<tpel::Scenario> grid;
  for (const auto& m : cfg.models) {
    for (const auto& c : cfg.cases) {
      for (const auto& st : cfg.studies) {
        for (const auto& me : cfg.methods) {
          // The complete method goes with full data only.
          if ((st == "none") != (me == "complete")) continue;
          for (int k : cfg.ks) {
            tpel::Scenario s;
            s.model = tpel::parse_model_id(m);
            s.error_case = tpel::parse_error_case(c);
            s.study = tpel::parse_study(st);
            s.method = tpel::parse_method(me);
            s.n = cfg.n;
            s.k = k;
            s.alpha = cfg.alpha;
            s.replications = cfg.replications;
            s.lcr_replications = std::min(cfg.lcr_replications, cfg.replications);
            s.base_seed = cfg.seed;
            s.noise_scale = cfg.noise_scale;
            s.pi_source = cfg.pi_mode == "known-spec" ? tpel::PiSource::Known : tpel::PiSource::KernelEstimated;
            s.validate();
            grid.push_back(s);
          }
        }
      }
    }
  }
  if (grid.empty()) throw UsageError("simulate: the grid is empty (study 'none' pairs with method 'complete' only)");
  std::vector<tpel::SimulationReport> reports;
  for (const auto& s : grid) {
    reports.push_back(tpel::run_study(s, cfg.threads));
    const auto& r = reports.back();
    err << to_string(s.model) << " case " << to_string(s.error_case) << ' ' << to_string(s.study) << ' '
        << to_string(s.method) << " k=" << s.k << ": CP " << r.coverage << " (" << r.completed << " completed, "
        << r.failure_count() << " failed)\n";
  }
  if (cfg.format == "csv") return tpel::reports_to_csv(reports, cfg.timing);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) rows.push_back(tpel::to_json(r, cfg.timing));
  nlohmann::json j = {{"config", cfg.to_json()}, {"reports", rows}};
  return j.dump(2) + "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = parse_run_config(argc, argv);
  } catch (const HelpRequested& h) {
    out << h.what();
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return 1;
  }
  std::string content;
  try {
    switch (cfg.command) {
      case Command::Test:
        content = cmd_test(cfg, err);
        break;
      case Command::Region:
        content = cmd_region(cfg, err);
        break;
      case Command::Simulate:
        content = cmd_simulate(cfg, err);
        break;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const tpel::Error& e) {
    err << "computation failed (" << tpel::to_string(e.kind()) << "): " << e.what() << '\n';
    return 2;
  }
  try {
    if (cfg.output_path.empty()) {
      out << content;
    } else {
      tpel::write_file_atomic(cfg.output_path, content);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace el_cli
