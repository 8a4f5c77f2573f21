#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "tpel/model.hpp"

namespace tpel {

enum class Phase { First, Second };

/// Observations (x_i, y_i, delta_i), i = 0..n-1, with the change index k:
/// rows [0, k) form the first phase and rows [k, n) the second.
///
/// A missing response is encoded as delta_i = 0; its stored y is a
/// placeholder that no computation may read.
struct Dataset {
  Eigen::MatrixXd x;                 ///< n x p regressors
  Eigen::VectorXd y;                 ///< responses (placeholder where delta = 0)
  std::vector<std::uint8_t> delta;   ///< 1 observed, 0 missing
  int k = 0;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }
  int begin(Phase ph) const { return ph == Phase::First ? 0 : k; }
  int end(Phase ph) const { return ph == Phase::First ? k : n(); }
  int size(Phase ph) const { return end(ph) - begin(ph); }
  int observed(Phase ph) const;
  bool fully_observed() const;
  Eigen::VectorXd row_x(int i) const { return x.row(i).transpose(); }

  /// Checks shapes, 1 <= k < n, finite observed responses and x. With
  /// `for_missing` each phase needs at least d + 1 observed rows; otherwise
  /// every response must be observed.
  void validate(int d, bool for_missing) const;

  static Dataset complete(Eigen::MatrixXd x, Eigen::VectorXd y, int k);
};

struct PhaseFit {
  Eigen::VectorXd beta_hat;
  double sigma2_hat = 0.0;  ///< rss / n_used
  double rss = 0.0;
  int n_used = 0;
  int iterations = 0;
  bool converged = false;
};

struct NlsOptions {
  int max_iter = 200;
  double grad_tol = 1e-8;   ///< relative to (1 + rss)
  double step_tol = 1e-12;
};

/// Least squares fit of one phase, minimizing sum w_i (y_i - f(x_i, beta))^2
/// with w_i = 1, or w_i = delta_i when `use_delta_weights`, by Gauss-Newton
/// with Levenberg damping. Each step is projected onto the domain box.
///
/// Throws InsufficientData when fewer than d rows carry weight and
/// FitFailureError (with the best iterate) when max_iter is exhausted.
PhaseFit fit_nls(const Dataset& data, Phase phase, const RegressionModel& model, const Eigen::VectorXd& init,
                 bool use_delta_weights, const NlsOptions& opts = {});

/// Coarse cold-start: the grid point of the domain box (points_per_axis per
/// coordinate) with the smallest weighted residual sum of squares.
Eigen::VectorXd grid_search_init(const Dataset& data, Phase phase, const RegressionModel& model,
                                 bool use_delta_weights, int points_per_axis = 21);

struct ErrorVariances {
  double first = 0.0;
  double second = 0.0;
};

/// Plug-in error variances: phase means of squared residuals at the phase
/// fits; with `missing`, delta-weighted means over observed rows only.
ErrorVariances estimate_sigmas(const Dataset& data, const RegressionModel& model, const PhaseFit& fit1,
                               const PhaseFit& fit2, bool missing);

}  // namespace tpel
