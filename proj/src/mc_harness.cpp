#include "tpel/mc_harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "tpel/el_complete.hpp"
#include "tpel/model.hpp"
#include "tpel/numerics.hpp"

namespace tpel {

std::string_view to_string(ModelId model) { return model == ModelId::Model1 ? "model1" : "model2"; }

std::string_view to_string(ErrorCase error_case) {
  switch (error_case) {
    case ErrorCase::A:
      return "a";
    case ErrorCase::B:
      return "b";
    case ErrorCase::C:
      return "c";
  }
  return "unknown";
}

std::string_view to_string(Study study) {
  switch (study) {
    case Study::None:
      return "none";
    case Study::S1:
      return "s1";
    case Study::S2:
      return "s2";
    case Study::S3:
      return "s3";
  }
  return "unknown";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Complete:
      return "complete";
    case Method::CompleteCase:
      return "complete-case";
    case Method::Weighted:
      return "weighted";
    case Method::Imputed:
      return "imputed";
  }
  return "unknown";
}

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const Enum (&values)[N], const char* what) {
  for (Enum v : values) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorKind::InvalidArgument, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

}  // namespace

ModelId parse_model_id(std::string_view name) {
  static constexpr ModelId all[] = {ModelId::Model1, ModelId::Model2};
  return parse_enum(name, all, "model");
}

ErrorCase parse_error_case(std::string_view name) {
  static constexpr ErrorCase all[] = {ErrorCase::A, ErrorCase::B, ErrorCase::C};
  return parse_enum(name, all, "error case");
}

Study parse_study(std::string_view name) {
  static constexpr Study all[] = {Study::None, Study::S1, Study::S2, Study::S3};
  return parse_enum(name, all, "study");
}

Method parse_method(std::string_view name) {
  static constexpr Method all[] = {Method::Complete, Method::CompleteCase, Method::Weighted, Method::Imputed};
  return parse_enum(name, all, "method");
}

void Scenario::validate() const {
  if (n < 2 || k < 1 || k >= n) {
    throw Error(ErrorKind::InvalidArgument,
                "scenario needs 1 <= k < n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
  }
  if (replications < 1) throw Error(ErrorKind::InvalidArgument, "scenario needs replications >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "scenario alpha must lie in (0, 1)");
  if (lcr_replications < 0) throw Error(ErrorKind::InvalidArgument, "scenario lcr_replications must be >= 0");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw Error(ErrorKind::InvalidArgument, "scenario noise_scale must be finite and >= 0");
  }
  if ((study == Study::None) != (method == Method::Complete)) {
    throw Error(ErrorKind::InvalidArgument, "the complete method goes with study 'none' and only with it");
  }
}

Truth scenario_truth(ModelId model) {
  Truth t;
  t.beta = Eigen::Vector2d(10.0, 2.0);
  t.beta1 = model == ModelId::Model1 ? Eigen::Vector2d(10.0, 2.0) : Eigen::Vector2d(7.0, 1.75);
  return t;
}

double study_pi(Study study, Phase phase, double x) {
  auto tapered = [](double v) {
    const double dist = std::abs(v - 1.0);
    return dist <= 1.0 ? 0.8 + 0.2 * dist : 0.95;
  };
  switch (study) {
    case Study::None:
      return 1.0;
    case Study::S1:
      return tapered(x);
    case Study::S2:
      return 0.8;
    case Study::S3:
      return phase == Phase::First ? tapered(x) : 0.8;
  }
  return 1.0;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t replication_seed(std::uint64_t base_seed, int r) {
  return splitmix64(base_seed + static_cast<std::uint64_t>(r));
}

Sampler::Sampler(std::uint64_t seed) : engine_(seed) {}

double Sampler::uniform() {
  // 53 random bits mapped to (0, 1).
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Sampler::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  return u * m;
}

double Sampler::exponential(double mean) { return -mean * std::log(uniform()); }

double Sampler::chi_square(int dof) {
  double s = 0.0;
  for (int i = 0; i < dof; ++i) {
    const double z = normal();
    s += z * z;
  }
  return s;
}

double Sampler::student_t(int dof) {
  const double z = normal();
  return z / std::sqrt(chi_square(dof) / dof);
}

double Sampler::error(ErrorCase error_case, Phase phase) {
  const bool first = phase == Phase::First;
  switch (error_case) {
    case ErrorCase::A:
      return normal();
    case ErrorCase::B:
      return first ? (chi_square(3) - 3.0) / std::sqrt(6.0) : 2.0 / std::sqrt(6.0) * student_t(6);
    case ErrorCase::C:
      return first ? 2.0 * exponential(0.5) - 1.0 : normal();
  }
  return 0.0;
}

Dataset gen_dataset(const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();
  const RegressionModel model = paper_ratio_model();
  const Truth truth = scenario_truth(scenario.model);
  Sampler rng(seed);
  const int n = scenario.n;
  Dataset data;
  data.k = scenario.k;
  data.x.resize(n, 1);
  data.y.resize(n);
  data.delta.assign(static_cast<std::size_t>(n), 1);
  Eigen::VectorXd x(1);
  for (int i = 0; i < n; ++i) {
    const Phase phase = i < scenario.k ? Phase::First : Phase::Second;
    x[0] = static_cast<double>(i + 1) / n;
    data.x(i, 0) = x[0];
    const double mean = model.value(x, phase == Phase::First ? truth.beta : truth.beta1);
    data.y[i] = mean + scenario.noise_scale * rng.error(scenario.error_case, phase);
    if (scenario.study != Study::None) {
      const bool observed = rng.uniform() < study_pi(scenario.study, phase, x[0]);
      data.delta[static_cast<std::size_t>(i)] = observed ? 1 : 0;
      if (!observed) data.y[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return data;
}

namespace {

MissingMethod to_missing(Method method) {
  switch (method) {
    case Method::CompleteCase:
      return MissingMethod::CompleteCase;
    case Method::Weighted:
      return MissingMethod::Weighted;
    case Method::Imputed:
      return MissingMethod::Imputed;
    case Method::Complete:
      break;
  }
  throw Error(ErrorKind::InvalidArgument, "complete method has no missing-data counterpart");
}

// NLS starts perturbed by up to 10% from the truth, drawn from a stream
// separate from the data.
std::pair<Eigen::VectorXd, Eigen::VectorXd> perturbed_starts(const Truth& truth, std::uint64_t seed) {
  Sampler rng(splitmix64(seed ^ 0x5eedf00dULL));
  auto jitter = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd out = b;
    for (Eigen::Index j = 0; j < b.size(); ++j) out[j] *= 1.0 + 0.2 * (rng.uniform() - 0.5);
    return out;
  };
  Eigen::VectorXd s1 = jitter(truth.beta);
  Eigen::VectorXd s2 = jitter(truth.beta1);
  return {s1, s2};
}

}  // namespace

ReplicationResult run_replication(const Scenario& scenario, int replication, bool with_region) {
  ReplicationResult out;
  try {
    const std::uint64_t seed = replication_seed(scenario.base_seed, replication);
    const Dataset data = gen_dataset(scenario, seed);
    const RegressionModel model = paper_ratio_model();
    const Truth truth = scenario_truth(scenario.model);
    const auto [init1, init2] = perturbed_starts(truth, seed);
    const Eigen::VectorXd delta0 = truth.delta0();
    const double critical = chi2_quantile(1.0 - scenario.alpha, model.d());

    StatisticFn statistic;
    Eigen::VectorXd center;
    if (scenario.method == Method::Complete) {
      CompleteOptions opts;
      opts.init1 = init1;
      opts.init2 = init2;
      const CompleteFit fit = fit_complete(data, model, opts);
      out.test = el_test_fitted(data, model, fit, delta0, scenario.alpha, opts);
      if (with_region) {
        statistic = complete_statistic(data, model, fit, opts);
        center = fit.delta_hat();
      }
    } else {
      MissingOptions opts;
      opts.init1 = init1;
      opts.init2 = init2;
      if (scenario.pi_source == PiSource::Known) {
        const Study study = scenario.study;
        opts.pi.source = PiSource::Known;
        opts.pi.known1 = [study](const Eigen::VectorXd& x) { return study_pi(study, Phase::First, x[0]); };
        opts.pi.known2 = [study](const Eigen::VectorXd& x) { return study_pi(study, Phase::Second, x[0]); };
      }
      const MissingFit fit = fit_missing(data, model, to_missing(scenario.method), opts);
      out.test = el_test_missing_fitted(data, model, fit, delta0, scenario.alpha, opts);
      if (with_region) {
        statistic = missing_statistic(data, model, fit, opts);
        center = fit.delta_hat();
      }
    }
    if (out.test.hull_violation) {
      out.failure = ErrorKind::ConvexHull;
      out.failure_message = "true delta0 violates the convex-hull condition";
      return out;
    }
    out.completed = true;
    out.statistic = out.test.statistic;
    out.covered = !out.test.reject;
    if (with_region) {
      // A failed region leaves the replication's test result intact.
      try {
        const RegionSummary region = region_summary_generic(statistic, critical, center);
        if (!region.degenerate) out.lcr = region.lcr;
      } catch (const Error&) {
      }
    }
  } catch (const Error& e) {
    out = ReplicationResult{};
    out.failure = e.kind();
    out.failure_message = e.what();
  }
  return out;
}

int SimulationReport::failure_count() const {
  int total = 0;
  for (const auto& [kind, count] : failures) total += count;
  return total;
}

double SimulationReport::rejection_rate(double alpha, int dof) const {
  if (statistics.empty()) return 0.0;
  const double critical = chi2_quantile(1.0 - alpha, dof);
  int rejected = 0;
  for (double z : statistics) rejected += z > critical;
  return static_cast<double>(rejected) / static_cast<double>(statistics.size());
}

int default_workers() {
  if (const char* env = std::getenv("EL_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

SimulationReport run_study(const Scenario& scenario, int workers) {
  scenario.validate();
  const auto start = std::chrono::steady_clock::now();
  const int reps = scenario.replications;
  std::vector<ReplicationResult> results(static_cast<std::size_t>(reps));
  const int threads = std::max(1, std::min(workers > 0 ? workers : default_workers(), reps));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int r = next++; r < reps; r = next++) {
      results[static_cast<std::size_t>(r)] = run_replication(scenario, r, r < scenario.lcr_replications);
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  SimulationReport report;
  report.scenario = scenario;
  double lcr_sum = 0.0;
  for (const auto& r : results) {
    if (r.failure) {
      ++report.failures[*r.failure];
      continue;
    }
    ++report.completed;
    report.covered += r.covered;
    report.statistics.push_back(r.statistic);
    if (r.lcr) {
      lcr_sum += *r.lcr;
      ++report.lcr_count;
    }
  }
  if (report.completed > 0) {
    report.coverage = static_cast<double>(report.covered) / report.completed;
    report.mc_stderr = std::sqrt(report.coverage * (1.0 - report.coverage) / report.completed);
  }
  if (report.lcr_count > 0) report.mean_lcr = lcr_sum / report.lcr_count;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace tpel
