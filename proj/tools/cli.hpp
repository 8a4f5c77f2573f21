#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tpel/estimation.hpp"

namespace el_cli {

enum class Command { Test, Region, Simulate };

/// Bad flags, bad config keys, bad values or unreadable input: exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully resolved settings of one invocation.
struct RunConfig {
  Command command = Command::Test;
  std::string input;  ///< CSV path or "builtin:<model>:<case>[:<study>]"
  std::string model_id = "paper-ratio";
  std::optional<int> k;
  std::vector<double> delta0;
  std::vector<double> center;  ///< region: optional center, default delta_hat
  double alpha = 0.05;
  std::string method = "complete";
  std::string pi_mode = "kernel";  ///< kernel | known-spec
  std::string pi_spec;             ///< s1 | s2 | s3 | constant in (0, 1]
  std::optional<std::pair<double, double>> bandwidths;
  std::uint64_t seed = 0;
  int n = 1000;                 ///< built-in data and simulate
  double noise_scale = 1.0;     ///< built-in data and simulate
  std::string output_path;      ///< empty: standard output
  std::string format = "json";  ///< json | csv
  std::string config_path;
  bool timing = false;

  // simulate grid
  std::vector<std::string> models = {"model1"};
  std::vector<std::string> cases = {"a"};
  std::vector<std::string> studies = {"none"};
  std::vector<std::string> methods = {"complete"};
  std::vector<int> ks;
  int replications = 1000;
  int lcr_replications = 0;
  int threads = 0;  ///< 0: EL_THREADS or hardware concurrency

  nlohmann::json to_json() const;
};

/// Parses argv (argv[0] is the program name) and, when --config is given,
/// a key=value file whose keys are the long flag names of the command.
/// Command-line flags override the file. Throws UsageError.
RunConfig parse_run_config(int argc, const char* const* argv);

/// Reads the CSV schema `x1,...,xp,y[,delta]`; a missing y is an empty field
/// with delta = 0. Throws UsageError citing the line number.
tpel::Dataset read_csv(const std::string& path, int p, int k);

/// Entry point behind main(): returns the process exit code (0 completed,
/// 1 usage/input error, 2 computational failure).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace el_cli
