#include "tpel/el_missing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tpel/errors.hpp"
#include "tpel/numerics.hpp"

namespace tpel {

std::string_view to_string(MissingMethod method) {
  switch (method) {
    case MissingMethod::CompleteCase:
      return "complete-case";
    case MissingMethod::Weighted:
      return "weighted";
    case MissingMethod::Imputed:
      return "imputed";
  }
  return "unknown";
}

double epanechnikov(const Eigen::VectorXd& u) {
  double k = 1.0;
  for (Eigen::Index r = 0; r < u.size(); ++r) {
    const double v = u[r];
    if (std::abs(v) > 1.0) return 0.0;
    k *= 0.75 * (1.0 - v * v);
  }
  return k;
}

double default_bandwidth(int phase_size) {
  if (phase_size < 1) throw Error(ErrorKind::InvalidArgument, "default_bandwidth: phase size must be positive");
  return std::pow(static_cast<double>(phase_size), -1.0 / 7.0);
}

double bandwidth_condition_value(int phase_size, double h, int d) {
  return phase_size * std::pow(h, 4.0 * std::max(2, d - 1));
}

PiEstimate estimate_pi(const Dataset& data, Phase phase, const KernelFn& kernel, std::optional<double> bandwidth,
                       const std::string& kernel_name) {
  if (!kernel) throw Error(ErrorKind::InvalidArgument, "estimate_pi: kernel is empty");
  const int b = data.begin(phase);
  const int m = data.size(phase);
  if (m < 1) throw Error(ErrorKind::InsufficientData, "estimate_pi: empty phase");
  const double h = bandwidth ? *bandwidth : default_bandwidth(m);
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::InvalidArgument, "estimate_pi: bandwidth must be positive");

  PiEstimate est;
  est.values.resize(m);
  est.bandwidth = h;
  est.kernel = kernel_name;
  est.source = PiSource::KernelEstimated;
  est.floor_value = 1.0 / (2.0 * m);
  const Eigen::MatrixXd X = data.x.middleRows(b, m);
  Eigen::VectorXd u(X.cols());
  for (int i = 0; i < m; ++i) {
    double num = 0.0;
    double den = 0.0;
    for (int l = 0; l < m; ++l) {
      u.noalias() = (X.row(l) - X.row(i)).transpose() / h;
      const double w = kernel(u);
      den += w;
      if (data.delta[static_cast<std::size_t>(b + l)] != 0) num += w;
    }
    double v = num / std::max(1.0, den);
    if (v <= 0.0) {
      v = est.floor_value;
      ++est.floored;
    }
    est.values[i] = v;
  }
  return est;
}

PiEstimate known_pi(const Dataset& data, Phase phase, const SelectionFn& pi) {
  if (!pi) throw Error(ErrorKind::InvalidArgument, "known_pi: selection function is empty");
  const int b = data.begin(phase);
  const int m = data.size(phase);
  PiEstimate est;
  est.values.resize(m);
  est.source = PiSource::Known;
  for (int i = 0; i < m; ++i) {
    const double v = pi(data.row_x(b + i));
    if (!(v > 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::InvalidProbability,
                  "selection probability " + std::to_string(v) + " outside (0, 1] at row " + std::to_string(b + i));
    }
    est.values[i] = v;
  }
  return est;
}

namespace {

double phase_pi(const Dataset& data, const PiEstimate& pi1, const PiEstimate& pi2, int row) {
  const double v = row < data.k ? pi1.values[row] : pi2.values[row - data.k];
  if (!(v > 0.0)) throw Error(ErrorKind::InvalidProbability, "selection probability must be positive");
  return v;
}

void check_pi_sizes(const Dataset& data, const PiEstimate& pi1, const PiEstimate& pi2) {
  if (pi1.values.size() != data.k || pi2.values.size() != data.n() - data.k) {
    throw Error(ErrorKind::InvalidArgument, "selection probabilities do not match the phase sizes");
  }
}

}  // namespace

ImputedResponses impute_responses(const Dataset& data, const RegressionModel& model, const PhaseFit& fit1,
                                  const PhaseFit& fit2, const PiEstimate& pi1, const PiEstimate& pi2) {
  if (!fit1.converged || !fit2.converged) {
    throw Error(ErrorKind::FitFailure, "impute_responses: phase fits must be converged");
  }
  check_pi_sizes(data, pi1, pi2);
  ImputedResponses out;
  out.beta_first = fit1.beta_hat;
  out.beta_second = fit2.beta_hat;
  out.y_R.resize(data.n());
  for (int i = 0; i < data.n(); ++i) {
    const double pi = phase_pi(data, pi1, pi2, i);
    const double forecast = model.value(data.row_x(i), i < data.k ? fit1.beta_hat : fit2.beta_hat);
    if (data.delta[static_cast<std::size_t>(i)] != 0) {
      const double w = 1.0 / pi;
      out.y_R[i] = w * data.y[i] + (1.0 - w) * forecast;
    } else {
      out.y_R[i] = forecast;
    }
  }
  return out;
}

Eigen::VectorXd g_missing(const RegressionModel& model, const Eigen::VectorXd& x, double y, bool delta,
                          const Eigen::VectorXd& beta, const Eigen::VectorXd& delta0, Phase phase,
                          MissingMethod method, double pi) {
  if (method == MissingMethod::Weighted && !(pi > 0.0)) {
    throw Error(ErrorKind::InvalidProbability, "weighted estimating vector needs pi > 0");
  }
  if (method != MissingMethod::Imputed && !delta) return Eigen::VectorXd::Zero(model.d());
  const double w = method == MissingMethod::Weighted ? 1.0 / pi : 1.0;
  const Eigen::VectorXd g = phase == Phase::First ? g_first(model, x, y, beta) : g_second(model, x, y, beta, delta0);
  return w * g;
}

ELAssembly assemble_missing(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& beta,
                            const Eigen::VectorXd& delta0, const MissingFit& fit) {
  if (beta.size() != delta0.size()) throw Error(ErrorKind::InvalidArgument, "assemble_missing: dimension mismatch");
  check_pi_sizes(data, fit.pi1, fit.pi2);
  const MissingMethod method = fit.method;
  if (method == MissingMethod::Imputed && fit.imputed.y_R.size() != data.n()) {
    throw Error(ErrorKind::InvalidArgument, "assemble_missing: imputed responses are missing");
  }
  const int d = model.d();
  const int n = data.n();
  const int k = data.k;
  Eigen::MatrixXd g_I = Eigen::MatrixXd::Zero(d, k), g_J = Eigen::MatrixXd::Zero(d, n - k);
  Eigen::MatrixXd V1 = Eigen::MatrixXd::Zero(d, d), V2 = Eigen::MatrixXd::Zero(d, d);
  // Pi-weighted sums of fddot r - fdot fdot' entering H for CompleteCase and Imputed.
  Eigen::MatrixXd A1 = Eigen::MatrixXd::Zero(d, d), A2 = Eigen::MatrixXd::Zero(d, d);
  const Eigen::VectorXd shifted_beta = beta - delta0;
  Jet jet, shifted;
  for (int i = 0; i < n; ++i) {
    const bool observed = data.delta[static_cast<std::size_t>(i)] != 0;
    if (method != MissingMethod::Imputed && !observed) continue;
    const double pi = phase_pi(data, fit.pi1, fit.pi2, i);
    const double y = method == MissingMethod::Imputed ? fit.imputed.y_R[i] : data.y[i];
    const double w = method == MissingMethod::Weighted ? 1.0 / pi : 1.0;
    const Eigen::VectorXd x = data.row_x(i);
    model.evaluate(x, beta, 2, jet);
    const bool first = i < k;
    double r;
    Eigen::MatrixXd cross;
    if (first) {
      r = y - jet.value;
      cross = jet.grad * jet.grad.transpose();
    } else {
      model.evaluate(x, shifted_beta, 1, shifted);
      r = y - shifted.value;
      cross = jet.grad * shifted.grad.transpose();
    }
    const Eigen::MatrixXd gd = jet.hess * r - cross;
    if (first) {
      g_I.col(i) = w * jet.grad * r;
      V1 += w * gd;
    } else {
      g_J.col(i - k) = w * jet.grad * r;
      V2 += w * gd;
    }
    if (method != MissingMethod::Weighted) {
      const double c = method == MissingMethod::CompleteCase ? pi : 1.0 / pi;
      const Eigen::MatrixXd term = jet.hess * r - jet.grad * jet.grad.transpose();
      (first ? A1 : A2) += c * term;
    }
  }
  V1 /= k;
  V2 /= (n - k);

  double s1 = fit.sigmas.first;
  double s2 = fit.sigmas.second;
  if (!(s1 >= 0.0) || !(s2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "error variances must be non-negative");
  if (s1 == 0.0 && s2 == 0.0) s1 = s2 = 1.0;  // common scale of H does not affect the statistic
  const double c1 = static_cast<double>(n - k) / (static_cast<double>(n) * k) * s1;
  const double c2 = static_cast<double>(k) / (static_cast<double>(n) * (n - k)) * s2;
  Eigen::MatrixXd Hinv;
  if (method == MissingMethod::Weighted) {
    Hinv = c1 * V2 + c2 * V1;
  } else {
    Hinv = c1 * V2 * solve_linear(V1, A1) + c2 * A2 * solve_linear(V2, V1);
  }
  Eigen::MatrixXd H = inverse_checked(Hinv);
  return finish_assembly(std::move(g_I), std::move(g_J), std::move(V1), std::move(V2), std::move(H));
}

MissingFit fit_missing(const Dataset& data, const RegressionModel& model, MissingMethod method,
                       const MissingOptions& opts) {
  data.validate(model.d(), true);
  MissingFit out;
  out.method = method;
  const Eigen::VectorXd init1 = opts.init1 ? *opts.init1 : grid_search_init(data, Phase::First, model, true);
  const Eigen::VectorXd init2 = opts.init2 ? *opts.init2 : grid_search_init(data, Phase::Second, model, true);
  out.fit1 = fit_nls(data, Phase::First, model, init1, true, opts.nls);
  out.fit2 = fit_nls(data, Phase::Second, model, init2, true, opts.nls);
  out.sigmas = estimate_sigmas(data, model, out.fit1, out.fit2, true);
  if (opts.pi.source == PiSource::Known) {
    out.pi1 = known_pi(data, Phase::First, opts.pi.known1);
    out.pi2 = known_pi(data, Phase::Second, opts.pi.known2);
  } else {
    out.pi1 = estimate_pi(data, Phase::First, opts.pi.kernel, opts.pi.bandwidth1, opts.pi.kernel_name);
    out.pi2 = estimate_pi(data, Phase::Second, opts.pi.kernel, opts.pi.bandwidth2, opts.pi.kernel_name);
  }
  if (method == MissingMethod::Imputed) {
    out.imputed = impute_responses(data, model, out.fit1, out.fit2, out.pi1, out.pi2);
  }
  return out;
}

ELTestResult el_test_missing_fitted(const Dataset& data, const RegressionModel& model, const MissingFit& fit,
                                    const Eigen::VectorXd& delta0, double alpha, const MissingOptions& opts) {
  if (delta0.size() != model.d() || !delta0.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "delta0 must be a finite vector of the parameter dimension");
  }
  AssembleFn at = [&](const Eigen::VectorXd& beta) { return assemble_missing(data, model, beta, delta0, fit); };
  return decide(at, profile_domain(model, delta0, opts.profile),
                profile_starts(fit.fit1.beta_hat, fit.fit2.beta_hat, delta0), alpha, opts.profile);
}

ELTestResult el_test_missing(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& delta0,
                             double alpha, MissingMethod method, const MissingOptions& opts) {
  return el_test_missing_fitted(data, model, fit_missing(data, model, method, opts), delta0, alpha, opts);
}

StatisticFn missing_statistic(const Dataset& data, const RegressionModel& model, const MissingFit& fit,
                              const MissingOptions& opts) {
  return [&data, &model, fit, opts](const Eigen::VectorXd& delta0) {
    try {
      return el_test_missing_fitted(data, model, fit, delta0, 0.05, opts).statistic;
    } catch (const Error& e) {
      if (is_region_exclusion(e.kind())) return std::numeric_limits<double>::infinity();
      throw;
    }
  };
}

RegionSummary region_summary_missing(const Dataset& data, const RegressionModel& model, double alpha,
                                     MissingMethod method, const std::optional<Eigen::VectorXd>& center,
                                     const MissingOptions& opts, const RegionOptions& region) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  const MissingFit fit = fit_missing(data, model, method, opts);
  const Eigen::VectorXd c = center ? *center : fit.delta_hat();
  return region_summary_generic(missing_statistic(data, model, fit, opts), chi2_quantile(1.0 - alpha, model.d()), c,
                                region);
}

}  // namespace tpel
