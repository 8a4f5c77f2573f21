// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits 0 once every check has run; a crash or an unexpected exception is
// the only nonzero exit. `--fast` shrinks the Monte Carlo sizes and
// `--only=N` runs a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tpel/el_complete.hpp"
#include "tpel/el_missing.hpp"
#include "tpel/mc_harness.hpp"
#include "tpel/numerics.hpp"

using namespace tpel;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

void report(int criterion, const Verdict& v, double seconds) {
  std::printf("criterion %d: %s — %s(%.1f s)\n", criterion, v.pass ? "PASS" : "FAIL", v.detail.str().c_str(),
              seconds);
  std::fflush(stdout);
}

template <typename Body>
void run_criterion(int criterion, Body body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << "[exception: " << e.what() << "] ";
  }
  report(criterion, v, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string label(const Scenario& s) {
  return std::string(to_string(s.model)) + "/" + std::string(to_string(s.error_case)) + "/" +
         std::string(to_string(s.study)) + "/" + std::string(to_string(s.method)) + "/k=" + std::to_string(s.k);
}

Scenario scenario(ModelId model, ErrorCase ec, Study study, Method method, int k, int reps) {
  Scenario s;
  s.model = model;
  s.error_case = ec;
  s.study = study;
  s.method = method;
  s.k = k;
  s.replications = reps;
  return s;
}

// One H0 replication with everything the invariant checks need: the test
// result and the estimating vectors at the profiled beta.
struct Run {
  bool ok = false;
  ELTestResult test;
  ELAssembly assembly;
  std::string failure;
};

Run run_once(const Scenario& s, int r) {
  Run out;
  const RegressionModel model = paper_ratio_model();
  const Truth truth = scenario_truth(s.model);
  const Dataset data = gen_dataset(s, replication_seed(s.base_seed, r));
  const Eigen::VectorXd d0 = truth.delta0();
  try {
    if (s.method == Method::Complete) {
      const CompleteFit fit = fit_complete(data, model);
      out.test = el_test_fitted(data, model, fit, d0, s.alpha);
      if (!out.test.hull_violation) out.assembly = assemble(data, model, out.test.beta_hat_profile, d0, fit.sigmas);
    } else {
      const MissingMethod m = s.method == Method::CompleteCase ? MissingMethod::CompleteCase
                              : s.method == Method::Weighted   ? MissingMethod::Weighted
                                                               : MissingMethod::Imputed;
      const MissingFit fit = fit_missing(data, model, m);
      out.test = el_test_missing_fitted(data, model, fit, d0, s.alpha);
      if (!out.test.hull_violation) {
        out.assembly = assemble_missing(data, model, out.test.beta_hat_profile, d0, fit);
      }
    }
    out.ok = true;
  } catch (const Error& e) {
    out.failure = std::string(to_string(e.kind()));
  }
  return out;
}

struct Options {
  bool fast = false;
};

// Statistic or error kind of one test call.
struct Outcome {
  bool ok = false;
  double statistic = 0.0;
  ErrorKind kind = ErrorKind::InvalidArgument;
};

template <typename F>
Outcome outcome(F f) {
  Outcome o;
  try {
    o.statistic = f();
    o.ok = true;
  } catch (const Error& e) {
    o.kind = e.kind();
  }
  return o;
}

std::vector<Run> calibration_runs(const Scenario& s, int seeds) {
  std::vector<Run> runs;
  runs.reserve(static_cast<std::size_t>(seeds));
  for (int r = 0; r < seeds; ++r) runs.push_back(run_once(s, r));
  return runs;
}

// ---------------------------------------------------------------------------

void criterion1(Verdict& v) {
  const double q95 = chi2_quantile(0.95, 2);
  const double q50 = chi2_quantile(0.5, 2);
  v.detail << "q(0.95,2)=" << fmt(q95, 10) << " q(0.5,2)=" << fmt(q50, 12) << " ";
  v.require(std::abs(q95 - 5.991465) <= 1e-6, "0.95 quantile");
  v.require(std::abs(q50 - 2.0 * std::log(2.0)) <= 1e-9, "median");
}

void coverage_table(Verdict& v, const std::vector<std::pair<Scenario, double>>& rows, double tol) {
  for (const auto& [s, target] : rows) {
    const SimulationReport r = run_study(s, default_workers());
    // A replication that cannot be completed counts as not covering.
    const double cp = static_cast<double>(r.covered) / s.replications;
    v.detail << label(s) << " CP=" << fmt(cp) << " (target " << target << ", " << r.completed << "/"
             << s.replications << " completed";
    if (r.failure_count()) v.detail << ", " << r.failure_count() << " failed";
    v.detail << ") ";
    v.require(std::abs(cp - target) <= tol, label(s) + " coverage");
  }
}

void criterion2(Verdict& v, const Options& o) {
  const int reps = o.fast ? 300 : 1000;
  const double tol = o.fast ? 0.05 : 0.03;
  const std::vector<std::pair<Scenario, double>> rows = {
      {scenario(ModelId::Model1, ErrorCase::A, Study::None, Method::Complete, 300, reps), 0.942},
      {scenario(ModelId::Model1, ErrorCase::A, Study::None, Method::Complete, 500, reps), 0.966},
      {scenario(ModelId::Model1, ErrorCase::A, Study::None, Method::Complete, 700, reps), 0.957}};
  v.detail << reps << " reps, tol " << tol << ": ";
  coverage_table(v, rows, tol);
}

void criterion3(Verdict& v, const Options& o) {
  const int reps = o.fast ? 300 : 1000;
  const std::vector<std::pair<Scenario, double>> c = {
      {scenario(ModelId::Model2, ErrorCase::A, Study::S1, Method::CompleteCase, 600, reps), 0.956},
      {scenario(ModelId::Model1, ErrorCase::A, Study::S1, Method::Weighted, 600, reps), 0.917},
      {scenario(ModelId::Model1, ErrorCase::B, Study::S1, Method::Imputed, 600, reps), 0.926}};
  v.detail << reps << " reps: ";
  coverage_table(v, {c[0]}, o.fast ? 0.05 : 0.03);
  coverage_table(v, {c[1], c[2]}, o.fast ? 0.05 : 0.04);
}

// Criteria 4, 8 and 9 (diagnostic part) share one set of H0 runs.
struct Calibration {
  std::vector<std::pair<Scenario, std::vector<Run>>> sets;
};

Calibration calibration(const Options& o) {
  const int seeds = o.fast ? 150 : 500;
  Calibration c;
  c.sets.emplace_back(scenario(ModelId::Model1, ErrorCase::A, Study::None, Method::Complete, 500, seeds),
                      std::vector<Run>{});
  for (Method m : {Method::CompleteCase, Method::Weighted, Method::Imputed}) {
    c.sets.emplace_back(scenario(ModelId::Model1, ErrorCase::A, Study::S2, m, 500, seeds), std::vector<Run>{});
  }
  for (auto& [s, runs] : c.sets) runs = calibration_runs(s, s.replications);
  return c;
}

void criterion4(Verdict& v, const Calibration& c) {
  for (const auto& [s, runs] : c.sets) {
    std::vector<double> stats;
    int failed = 0;
    for (const auto& r : runs) {
      if (!r.ok) {
        ++failed;
        continue;
      }
      // A convex-hull violation has statistic +inf and rejects at every level.
      stats.push_back(r.test.statistic);
    }
    const double m = static_cast<double>(stats.size());
    v.detail << to_string(s.method) << " (" << stats.size() << " seeds";
    if (failed) v.detail << ", " << failed << " failed";
    v.detail << "):";
    for (double alpha : {0.10, 0.05, 0.01}) {
      const double critical = chi2_quantile(1.0 - alpha, 2);
      const double rate =
          std::count_if(stats.begin(), stats.end(), [&](double z) { return z > critical; }) / std::max(1.0, m);
      const double se = std::sqrt(alpha * (1.0 - alpha) / std::max(1.0, m));
      v.detail << " a=" << alpha << " rate=" << fmt(rate, 3) << " (" << fmt((rate - alpha) / se, 2) << " se)";
      v.require(std::abs(rate - alpha) <= 3.0 * se,
                std::string(to_string(s.method)) + " alpha=" + fmt(alpha, 2));
    }
    v.require(failed == 0, std::string(to_string(s.method)) + " failures");
    v.detail << "; ";
  }
}

void criterion5(Verdict& v, const Options& o) {
  const int seeds = o.fast ? 60 : 200;
  std::map<int, double> lambda_med, beta_med;
  const Eigen::Vector2d beta0(10.0, 2.0);
  for (int n : {250, 500, 1000}) {
    Scenario s = scenario(ModelId::Model1, ErrorCase::A, Study::None, Method::Complete, n / 2, seeds);
    s.n = n;
    std::vector<double> lam, beta;
    int failed = 0;
    for (int r = 0; r < seeds; ++r) {
      const ReplicationResult rr = run_replication(s, r, false);
      if (!rr.completed) {
        ++failed;
        continue;
      }
      lam.push_back(std::sqrt(static_cast<double>(n)) * rr.test.lambda_hat.norm());
      beta.push_back((rr.test.beta_hat_profile - beta0).norm());
    }
    lambda_med[n] = median(lam);
    beta_med[n] = median(beta);
    v.detail << "n=" << n << ": med sqrt(n)|lambda|=" << fmt(lambda_med[n]) << " med|beta-beta0|=" << fmt(beta_med[n]);
    if (failed) v.detail << " (" << failed << " failed)";
    v.detail << "; ";
  }
  const double lratio = lambda_med[1000] / lambda_med[250];
  const double bratio = beta_med[1000] / beta_med[250];
  v.detail << "lambda ratio " << fmt(lratio) << ", beta ratio " << fmt(bratio) << " ";
  v.require(lratio <= 1.5, "lambda ratio <= 1.5");
  v.require(lambda_med[500] / lambda_med[250] <= 1.5, "lambda bounded at n=500");
  v.require(bratio <= 0.7, "beta ratio <= 0.7");
}

void criterion6(Verdict& v) {
  std::mt19937_64 rng(2718);
  double worst_lambda = 0.0, worst_z = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = oracle::random_scalar_instance(rng);
    const auto grid = oracle::grid_maximize(inst.zi, inst.zj, 1e-6);
    const LambdaSolution sol = solve_lambda(Eigen::MatrixXd(inst.zi), Eigen::MatrixXd(inst.zj));
    worst_lambda = std::max(worst_lambda, std::abs(sol.lambda[0] - grid.lambda));
    worst_z = std::max(worst_z, std::abs(sol.statistic - grid.statistic));
  }
  v.detail << "50 instances: max |dlambda|=" << fmt(worst_lambda, 3) << " max |dZ|=" << fmt(worst_z, 3) << " ";
  v.require(worst_lambda <= 1e-5, "lambda agreement");
  v.require(worst_z <= 1e-8, "statistic agreement");
}

void criterion7(Verdict& v) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  double worst_score = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd zi = Eigen::MatrixXd::NullaryExpr(2, 25, [&] { return nd(rng); });
    const Eigen::MatrixXd zj = Eigen::MatrixXd::NullaryExpr(2, 35, [&] { return nd(rng); });
    Eigen::VectorXd l(2);
    do {
      l << 0.03 * nd(rng), 0.03 * nd(rng);
    } while (!lambda_feasible(zi, zj, l));
    auto half = [&](const Eigen::VectorXd& u) { return 0.5 * el_statistic(zi, zj, u); };
    const Eigen::VectorXd fd = oracle::fd_gradient(half, l, 1e-5);
    const Eigen::VectorXd an = el_score(zi, zj, l);
    worst_score = std::max(worst_score, (an - fd).norm() / std::max(1e-12, an.norm()));
  }

  const RegressionModel m = paper_ratio_model();
  const Eigen::Vector2d d0(3.0, 0.25);
  std::uniform_real_distribution<double> ux(0.02, 0.98), ua(-30, 30), ub(0.8, 6), uy(-5, 5);
  double worst_gdot = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, ux(rng));
    const double y = uy(rng);
    const Eigen::VectorXd beta = Eigen::Vector2d(ua(rng), ub(rng));
    auto g1 = [&](const Eigen::VectorXd& b) { return g_first(m, x, y, b); };
    worst_gdot = std::max(worst_gdot, oracle::relative_error(gdot(m, x, y, beta, Phase::First, d0),
                                                             oracle::fd_jacobian(g1, beta, 1e-5)));
    auto g2 = [&](const Eigen::VectorXd& b) { return g_second(m, x, y, b, d0); };
    worst_gdot = std::max(worst_gdot, oracle::relative_error(gdot(m, x, y, beta, Phase::Second, d0),
                                                             oracle::fd_jacobian(g2, beta, 1e-5)));
  }
  v.detail << "20 points each: score rel err " << fmt(worst_score, 3) << ", gdot rel err " << fmt(worst_gdot, 3)
           << " ";
  v.require(worst_score < 1e-6, "score vs finite differences");
  v.require(worst_gdot < 1e-5, "gdot vs finite differences");
}

void criterion8(Verdict& v, const Calibration& c) {
  int checked = 0, missing_weights = 0;
  double worst_sum = 0.0, worst_constraint = 0.0, min_weight = 1.0;
  for (const auto& [s, runs] : c.sets) {
    for (const auto& r : runs) {
      if (!r.ok || r.test.hull_violation) continue;
      if (!r.test.weights_available) {
        ++missing_weights;
        continue;
      }
      ++checked;
      const Eigen::VectorXd& p = r.test.weights_I;
      const Eigen::VectorXd& q = r.test.weights_J;
      worst_sum = std::max({worst_sum, std::abs(p.sum() - 1.0), std::abs(q.sum() - 1.0)});
      min_weight = std::min({min_weight, p.minCoeff(), q.minCoeff()});
      worst_constraint =
          std::max({worst_constraint, (r.assembly.z_I * p).norm(), (r.assembly.z_J * q).norm()});
    }
  }
  v.detail << checked << " converged tests: max |sum-1|=" << fmt(worst_sum, 3) << " min weight=" << fmt(min_weight, 3)
           << " max |sum w z|=" << fmt(worst_constraint, 3) << " ";
  v.require(checked > 0, "some converged tests");
  v.require(missing_weights == 0, "weights for every converged test");
  v.require(worst_sum <= 1e-8, "weights sum to one");
  v.require(min_weight > 0.0, "positive weights");
  v.require(worst_constraint < 1e-6, "moment constraints");
}

void criterion9(Verdict& v, const Calibration& c, const Options& o) {
  const RegressionModel model = paper_ratio_model();
  const int seeds = o.fast ? 3 : 10;

  // Full data: all four statistics coincide. A seed on which the complete
  // test fails must fail the same way for every method.
  double worst_collapse = 0.0;
  int collapse_mismatch = 0, collapse_failed = 0;
  for (int r = 0; r < seeds; ++r) {
    Scenario s = scenario(ModelId::Model2, ErrorCase::A, Study::None, Method::Complete, 500, 1);
    const Dataset data = gen_dataset(s, replication_seed(100, r));
    const Eigen::VectorXd d0 = scenario_truth(s.model).delta0();
    const Outcome full = outcome([&] { return el_test(data, model, d0, 0.05).statistic; });
    collapse_failed += !full.ok;
    for (MissingMethod m : {MissingMethod::CompleteCase, MissingMethod::Weighted, MissingMethod::Imputed}) {
      const Outcome o = outcome([&] { return el_test_missing(data, model, d0, 0.05, m).statistic; });
      if (o.ok != full.ok || o.kind != full.kind) {
        ++collapse_mismatch;
      } else if (o.ok) {
        worst_collapse = std::max(worst_collapse, std::abs(o.statistic - full.statistic) / (1.0 + full.statistic));
      }
    }
  }
  v.detail << "collapse max rel diff " << fmt(worst_collapse, 3) << " over " << seeds << " seeds (" << collapse_failed
           << " failing alike); ";
  v.require(worst_collapse <= 1e-8 && collapse_mismatch == 0, "method collapse");

  // Placeholders of missing responses never enter the statistic.
  bool stable = true;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1e3);
  for (int r = 0; r < seeds; ++r) {
    Scenario s = scenario(ModelId::Model1, ErrorCase::A, Study::S1, Method::CompleteCase, 500, 1);
    const Dataset data = gen_dataset(s, replication_seed(200, r));
    Dataset noisy = data;
    for (Eigen::Index i = 0; i < noisy.n(); ++i) {
      if (!noisy.delta[static_cast<std::size_t>(i)]) noisy.y[i] = nd(rng);
    }
    const Eigen::VectorXd d0 = Eigen::VectorXd::Zero(2);
    for (MissingMethod m : {MissingMethod::CompleteCase, MissingMethod::Weighted, MissingMethod::Imputed}) {
      const Outcome a = outcome([&] { return el_test_missing(data, model, d0, 0.05, m).statistic; });
      const Outcome b = outcome([&] { return el_test_missing(noisy, model, d0, 0.05, m).statistic; });
      stable &= a.ok == b.ok && a.kind == b.kind && (!a.ok || a.statistic == b.statistic);
    }
  }
  v.detail << "placeholders " << (stable ? "bit-stable" : "NOT stable") << "; ";
  v.require(stable, "placeholder independence");

  // Flipping the sign of every estimating vector leaves Z unchanged.
  double worst_flip = 0.0;
  int flips = 0;
  for (const auto& r : c.sets.front().second) {
    if (!r.ok || r.test.hull_violation || flips == 20) continue;
    const auto a = solve_lambda(r.assembly.z_I, r.assembly.z_J);
    const auto b = solve_lambda(Eigen::MatrixXd(-r.assembly.z_I), Eigen::MatrixXd(-r.assembly.z_J));
    worst_flip = std::max(worst_flip, std::abs(a.statistic - b.statistic) / (1.0 + a.statistic));
    ++flips;
  }
  v.detail << "sign flip max rel diff " << fmt(worst_flip, 3) << " over " << flips << "; ";
  v.require(flips > 0 && worst_flip <= 1e-10, "sign-flip invariance");

  // S diagnostic close to the identity.
  int total = 0, close = 0;
  for (const auto& r : c.sets.front().second) {
    if (total == 200) break;
    if (!r.ok || r.test.hull_violation) continue;
    ++total;
    close += (r.test.diagnostics.S - Eigen::Matrix2d::Identity()).norm() < 0.25;
  }
  const double share = total ? static_cast<double>(close) / total : 0.0;
  v.detail << "||S-I||_F < 0.25 in " << close << "/" << total << " (" << fmt(100 * share, 3) << "%) ";
  v.require(share >= 0.9, "S diagnostic in >= 90% of seeds");
}

void criterion10(Verdict& v, const Options& o) {
  const int reps = o.fast ? 5 : 20;
  for (int k : {300, 500, 700}) {
    Scenario s = scenario(ModelId::Model1, ErrorCase::A, Study::None, Method::Complete, k, reps);
    s.lcr_replications = reps;
    const SimulationReport r = run_study(s, default_workers());
    v.detail << "k=" << k << " mean LCR " << fmt(r.mean_lcr) << " (" << r.lcr_count << " regions); ";
    v.require(r.lcr_count > 0 && r.mean_lcr >= 2.0 && r.mean_lcr <= 12.0, "LCR in [2, 12] at k=" + std::to_string(k));
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--fast") == 0) {
      o.fast = true;
    } else if (std::strncmp(argv[i], "--only=", 7) == 0) {
      only = std::atoi(argv[i] + 7);
    } else {
      std::cerr << "usage: acceptance [--fast] [--only=N]\n";
      return 1;
    }
  }
  std::printf("acceptance run (%s mode, %d workers)\n", o.fast ? "fast" : "full", default_workers());
  std::fflush(stdout);
  auto wanted = [&](int c) { return only == 0 || only == c; };

  if (wanted(1)) run_criterion(1, criterion1);
  if (wanted(2)) run_criterion(2, [&](Verdict& v) { criterion2(v, o); });
  if (wanted(3)) run_criterion(3, [&](Verdict& v) { criterion3(v, o); });
  Calibration c;
  if (wanted(4) || wanted(8) || wanted(9)) {
    const auto start = std::chrono::steady_clock::now();
    c = calibration(o);
    std::printf("(H0 calibration runs: %.1f s)\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  if (wanted(4)) run_criterion(4, [&](Verdict& v) { criterion4(v, c); });
  if (wanted(5)) run_criterion(5, [&](Verdict& v) { criterion5(v, o); });
  if (wanted(6)) run_criterion(6, criterion6);
  if (wanted(7)) run_criterion(7, criterion7);
  if (wanted(8)) run_criterion(8, [&](Verdict& v) { criterion8(v, c); });
  if (wanted(9)) run_criterion(9, [&](Verdict& v) { criterion9(v, c, o); });
  if (wanted(10)) run_criterion(10, [&](Verdict& v) { criterion10(v, o); });
  return 0;
}
