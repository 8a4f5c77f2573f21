#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tpel/el_missing.hpp"
#include "tpel/errors.hpp"
#include "tpel/estimation.hpp"

namespace tpel {

enum class ModelId { Model1, Model2 };
enum class ErrorCase { A, B, C };
enum class Study { None, S1, S2, S3 };
enum class Method { Complete, CompleteCase, Weighted, Imputed };

std::string_view to_string(ModelId model);
std::string_view to_string(ErrorCase error_case);
std::string_view to_string(Study study);
std::string_view to_string(Method method);

/// Inverse of to_string; throws InvalidArgument for unknown names.
ModelId parse_model_id(std::string_view name);
ErrorCase parse_error_case(std::string_view name);
Study parse_study(std::string_view name);
Method parse_method(std::string_view name);

/// One cell of a simulation table.
struct Scenario {
  ModelId model = ModelId::Model1;
  ErrorCase error_case = ErrorCase::A;
  Study study = Study::None;
  int n = 1000;
  int k = 500;
  double alpha = 0.05;
  Method method = Method::Complete;
  int replications = 1000;
  std::uint64_t base_seed = 0;
  /// Region lengths are computed for the first `lcr_replications`
  /// replications only (a region costs dozens of tests).
  int lcr_replications = 0;
  /// Multiplies every error draw; 0 gives noiseless data.
  double noise_scale = 1.0;
  /// Selection probabilities: kernel estimates (as in the study) or the
  /// study's true functions.
  PiSource pi_source = PiSource::KernelEstimated;

  /// Checks 1 <= k < n, replications >= 1, alpha in (0, 1) and
  /// study == None <=> method == Complete. Throws InvalidArgument.
  void validate() const;
};

/// Phase parameters and the hypothesis that holds for a scenario.
struct Truth {
  Eigen::VectorXd beta;   ///< first phase
  Eigen::VectorXd beta1;  ///< second phase
  Eigen::VectorXd delta0() const { return beta - beta1; }
};

Truth scenario_truth(ModelId model);

/// Selection probability of a study in a phase; 1 for Study::None.
double study_pi(Study study, Phase phase, double x);

/// Portable samplers driven by a 64-bit Mersenne Twister, so that a seed
/// produces the same draws with every standard library.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed);

  double uniform();      ///< U(0, 1), 53-bit, never 0
  double normal();       ///< N(0, 1), Marsaglia polar method
  double exponential(double mean);
  double chi_square(int dof);  ///< sum of dof squared normals
  double student_t(int dof);   ///< N / sqrt(chi2_dof / dof)

  /// First- and second-phase errors of a case, each with mean 0 and
  /// variance 1.
  double error(ErrorCase error_case, Phase phase);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// SplitMix64 finalizer; maps consecutive seeds to decorrelated states.
std::uint64_t splitmix64(std::uint64_t x);

/// Replication seed `base_seed + r` mixed into an engine seed.
std::uint64_t replication_seed(std::uint64_t base_seed, int r);

/// Data for a scenario: X_i = i / n, phase parameters per model, errors per
/// case, responses missing per study (missing y stored as NaN).
Dataset gen_dataset(const Scenario& scenario, std::uint64_t seed);

struct ReplicationResult {
  bool completed = false;  ///< false when `failure` is set
  bool covered = false;
  double statistic = 0.0;
  std::optional<double> lcr;
  std::optional<ErrorKind> failure;
  std::string failure_message;
  ELTestResult test;
};

/// Generates data, tests the true delta0 and (when `with_region`) measures
/// the region length. Errors are captured in the result, never thrown.
ReplicationResult run_replication(const Scenario& scenario, int replication, bool with_region);

struct SimulationReport {
  Scenario scenario;
  int completed = 0;
  int covered = 0;
  double coverage = 0.0;
  double mc_stderr = 0.0;
  double mean_lcr = 0.0;
  int lcr_count = 0;
  std::map<ErrorKind, int> failures;
  /// Statistic of every completed replication in replication order.
  std::vector<double> statistics;
  double wall_time = 0.0;

  int failure_count() const;
  /// Fraction of completed replications with statistic above the
  /// chi^2_d quantile at `alpha`.
  double rejection_rate(double alpha, int dof = 2) const;
};

/// Number of worker threads: EL_THREADS when set and positive, else the
/// hardware concurrency (at least 1).
int default_workers();

/// Runs every replication (seeds base_seed + r) over `workers` threads and
/// aggregates in replication order, so the report does not depend on the
/// worker count.
SimulationReport run_study(const Scenario& scenario, int workers = 0);

}  // namespace tpel
