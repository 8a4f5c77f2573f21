#include "tpel/estimation.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tpel/errors.hpp"
#include "tpel/numerics.hpp"

namespace tpel {

int Dataset::observed(Phase ph) const {
  int count = 0;
  for (int i = begin(ph); i < end(ph); ++i) count += delta[static_cast<std::size_t>(i)] != 0;
  return count;
}

bool Dataset::fully_observed() const {
  for (auto v : delta) {
    if (v == 0) return false;
  }
  return true;
}

void Dataset::validate(int d, bool for_missing) const {
  const int rows = n();
  if (x.rows() != rows || static_cast<int>(delta.size()) != rows) {
    throw Error(ErrorKind::InvalidArgument, "dataset columns have inconsistent lengths");
  }
  if (x.cols() < 1) throw Error(ErrorKind::InvalidArgument, "dataset has no regressor columns");
  if (k < 1 || k >= rows) {
    throw Error(ErrorKind::InvalidArgument,
                "change index k = " + std::to_string(k) + " must satisfy 1 <= k < n = " + std::to_string(rows));
  }
  if (!x.allFinite()) throw Error(ErrorKind::InvalidArgument, "dataset has non-finite regressors");
  for (int i = 0; i < rows; ++i) {
    const auto di = delta[static_cast<std::size_t>(i)];
    if (di > 1) throw Error(ErrorKind::InvalidArgument, "delta must be 0 or 1 (row " + std::to_string(i) + ")");
    if (di == 1 && !std::isfinite(y[i])) {
      throw Error(ErrorKind::InvalidArgument, "observed response is not finite (row " + std::to_string(i) + ")");
    }
    if (di == 0 && !for_missing) {
      throw Error(ErrorKind::InsufficientData,
                  "complete-data methods need every response; row " + std::to_string(i) + " is missing");
    }
  }
  if (for_missing) {
    for (Phase ph : {Phase::First, Phase::Second}) {
      if (observed(ph) < d + 1) {
        throw Error(ErrorKind::InsufficientData, std::string(ph == Phase::First ? "first" : "second") +
                                                     " phase has fewer than d + 1 observed responses");
      }
    }
  }
}

Dataset Dataset::complete(Eigen::MatrixXd x, Eigen::VectorXd y, int k) {
  Dataset data;
  data.delta.assign(static_cast<std::size_t>(y.size()), 1);
  data.x = std::move(x);
  data.y = std::move(y);
  data.k = k;
  return data;
}

namespace {

struct WeightedRows {
  std::vector<int> rows;
};

WeightedRows usable_rows(const Dataset& data, Phase phase, bool use_delta_weights) {
  WeightedRows out;
  for (int i = data.begin(phase); i < data.end(phase); ++i) {
    const bool observed = data.delta[static_cast<std::size_t>(i)] != 0;
    if (!observed && !use_delta_weights) {
      throw Error(ErrorKind::InvalidArgument, "unweighted fit over a phase with missing responses (row " +
                                                  std::to_string(i) + ")");
    }
    if (observed) out.rows.push_back(i);
  }
  return out;
}

double rss_at(const Dataset& data, const std::vector<int>& rows, const RegressionModel& model,
              const Eigen::VectorXd& beta) {
  double rss = 0.0;
  Jet jet;
  for (int i : rows) {
    model.evaluate(data.row_x(i), beta, 0, jet);
    const double r = data.y[i] - jet.value;
    rss += r * r;
  }
  return rss;
}

}  // namespace

PhaseFit fit_nls(const Dataset& data, Phase phase, const RegressionModel& model, const Eigen::VectorXd& init,
                 bool use_delta_weights, const NlsOptions& opts) {
  const Box& box = model.domain();
  if (init.size() != model.d() || !box.contains(init)) {
    throw Error(ErrorKind::ParameterOutOfBounds, "fit_nls: initial value outside the parameter domain");
  }
  const auto usable = usable_rows(data, phase, use_delta_weights);
  const int d = model.d();
  const int m = static_cast<int>(usable.rows.size());
  if (m < d) {
    throw Error(ErrorKind::InsufficientData, "fit_nls: " + std::to_string(m) + " usable rows for " +
                                                 std::to_string(d) + " parameters");
  }

  Eigen::VectorXd beta = init;
  Eigen::MatrixXd jtj(d, d);
  Eigen::VectorXd jtr(d);
  double rss = 0.0;
  Jet jet;
  auto linearize = [&]() {
    jtj.setZero();
    jtr.setZero();
    rss = 0.0;
    for (int i : usable.rows) {
      model.evaluate(data.row_x(i), beta, 1, jet);
      const double r = data.y[i] - jet.value;
      rss += r * r;
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(jet.grad);
      jtr += jet.grad * r;
    }
    jtj = jtj.selfadjointView<Eigen::Lower>();
  };

  linearize();
  double mu = 1e-3 * std::max(jtj.diagonal().maxCoeff(), 1e-12);
  PhaseFit fit;
  fit.n_used = m;
  for (int it = 0; it < opts.max_iter; ++it) {
    fit.iterations = it;
    // Coordinates held at a bound whose gradient points outward are frozen;
    // the damped step is solved over the remaining ones.
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < d; ++j) {
      const bool blocked = (beta[j] <= box.lower[j] && jtr[j] < 0) || (beta[j] >= box.upper[j] && jtr[j] > 0);
      if (!blocked) free.push_back(j);
    }
    double grad_norm = 0.0;
    for (auto j : free) grad_norm = std::max(grad_norm, std::abs(jtr[j]));
    if (grad_norm < opts.grad_tol * (1.0 + rss)) {
      fit.converged = true;
      break;
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd damped(nf, nf);
    Eigen::VectorXd rhs(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      rhs[a] = jtr[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) damped(a, b) = jtj(free[a], free[b]);
      damped(a, a) += mu * std::max(jtj(free[a], free[a]), 1e-12);
    }
    Eigen::VectorXd step = Eigen::VectorXd::Zero(d);
    try {
      const Eigen::VectorXd reduced = solve_linear(damped, rhs);
      for (Eigen::Index a = 0; a < nf; ++a) step[free[a]] = reduced[a];
    } catch (const SingularMatrixError&) {
      mu *= 10.0;
      continue;
    }
    const Eigen::VectorXd trial = box.clamp(beta + step);
    if ((trial - beta).lpNorm<Eigen::Infinity>() < opts.step_tol * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      break;
    }
    const double trial_rss = rss_at(data, usable.rows, model, trial);
    if (trial_rss < rss) {
      beta = trial;
      linearize();
      mu = std::max(mu / 3.0, 1e-15);
    } else {
      mu *= 4.0;
      if (mu > 1e16) {
        // No descent is representable along any damped direction.
        fit.converged = true;
        break;
      }
    }
  }
  fit.beta_hat = beta;
  fit.rss = rss;
  fit.sigma2_hat = rss / m;
  if (!fit.converged) {
    throw FitFailureError("fit_nls: no convergence in " + std::to_string(opts.max_iter) + " iterations", beta);
  }
  return fit;
}

Eigen::VectorXd grid_search_init(const Dataset& data, Phase phase, const RegressionModel& model,
                                 bool use_delta_weights, int points_per_axis) {
  if (points_per_axis < 2) throw Error(ErrorKind::InvalidArgument, "grid_search_init: need >= 2 points per axis");
  const auto usable = usable_rows(data, phase, use_delta_weights);
  if (usable.rows.empty()) throw Error(ErrorKind::InsufficientData, "grid_search_init: no usable rows");
  const Box& box = model.domain();
  const int d = model.d();
  Eigen::VectorXi index = Eigen::VectorXi::Zero(d);
  Eigen::VectorXd best;
  double best_rss = std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta(d);
  while (true) {
    for (int j = 0; j < d; ++j) {
      beta[j] = box.lower[j] + box.width()[j] * index[j] / (points_per_axis - 1);
    }
    const double r = rss_at(data, usable.rows, model, beta);
    if (r < best_rss) {
      best_rss = r;
      best = beta;
    }
    int j = 0;
    while (j < d && ++index[j] == points_per_axis) index[j++] = 0;
    if (j == d) break;
  }
  if (!best.size()) throw Error(ErrorKind::NumericOverflow, "grid_search_init: no finite residual sum");
  return best;
}

ErrorVariances estimate_sigmas(const Dataset& data, const RegressionModel& model, const PhaseFit& fit1,
                               const PhaseFit& fit2, bool missing) {
  if (!fit1.converged || !fit2.converged) {
    throw Error(ErrorKind::FitFailure, "estimate_sigmas: phase fits must be converged");
  }
  auto phase_mean = [&](Phase ph, const Eigen::VectorXd& beta) {
    const auto usable = usable_rows(data, ph, missing);
    if (usable.rows.empty()) throw Error(ErrorKind::InsufficientData, "estimate_sigmas: no observed responses");
    return rss_at(data, usable.rows, model, beta) / static_cast<double>(usable.rows.size());
  };
  return {phase_mean(Phase::First, fit1.beta_hat), phase_mean(Phase::Second, fit2.beta_hat)};
}

}  // namespace tpel
