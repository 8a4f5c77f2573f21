#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "tpel/el_complete.hpp"
#include "tpel/estimation.hpp"
#include "tpel/model.hpp"

namespace tpel {

enum class MissingMethod { CompleteCase, Weighted, Imputed };

std::string_view to_string(MissingMethod method);

/// Kernel on R^p, bounded with compact support.
using KernelFn = std::function<double(const Eigen::VectorXd& u)>;

/// Product Epanechnikov kernel prod_r 0.75 (1 - u_r^2) 1{|u_r| <= 1}.
double epanechnikov(const Eigen::VectorXd& u);

/// Selection probability pi(x) = P[delta = 1 | X = x].
using SelectionFn = std::function<double(const Eigen::VectorXd& x)>;

enum class PiSource { Known, KernelEstimated };

/// Per-row selection probabilities of one phase. Values lie in (0, 1].
struct PiEstimate {
  Eigen::VectorXd values;
  double bandwidth = 0.0;                   ///< 0 for known probabilities
  std::string kernel;                       ///< kernel name, empty for known
  PiSource source = PiSource::Known;
  int floored = 0;                          ///< rows whose zero estimate was floored
  double floor_value = 0.0;
};

/// Default bandwidth phase_size^(-1/7).
double default_bandwidth(int phase_size);

/// phase_size * h^(4 max(2, d - 1)): the bandwidth condition asks for this
/// to vanish asymptotically; values >= 1 deserve a warning at finite n.
double bandwidth_condition_value(int phase_size, double h, int d);

/// Within-phase kernel estimate
///   pi_hat(x_i) = sum_l delta_l K((x_l - x_i)/h) / max{1, sum_l K((x_l - x_i)/h)}.
/// Zero estimates are floored at 1 / (2 * phase size) and counted.
PiEstimate estimate_pi(const Dataset& data, Phase phase, const KernelFn& kernel = epanechnikov,
                       std::optional<double> bandwidth = std::nullopt, const std::string& kernel_name = "epanechnikov");

/// Known probabilities evaluated on one phase. Throws InvalidProbability for
/// values outside (0, 1].
PiEstimate known_pi(const Dataset& data, Phase phase, const SelectionFn& pi);

/// Y_R = (delta / pi) Y + (1 - delta / pi) f(x, beta_phase) for every row.
struct ImputedResponses {
  Eigen::VectorXd y_R;
  Eigen::VectorXd beta_first;
  Eigen::VectorXd beta_second;
};

ImputedResponses impute_responses(const Dataset& data, const RegressionModel& model, const PhaseFit& fit1,
                                  const PhaseFit& fit2, const PiEstimate& pi1, const PiEstimate& pi2);

/// The method's estimating vector for one row. `y` is the observed response
/// (CompleteCase, Weighted) or the imputed Y_R (Imputed). When delta = 0 the
/// CompleteCase and Weighted vectors are exactly zero and y is never read.
Eigen::VectorXd g_missing(const RegressionModel& model, const Eigen::VectorXd& x, double y, bool delta,
                          const Eigen::VectorXd& beta, const Eigen::VectorXd& delta0, Phase phase,
                          MissingMethod method, double pi);

/// Everything a missing-data statistic needs besides beta and delta0.
struct MissingFit {
  MissingMethod method = MissingMethod::CompleteCase;
  PhaseFit fit1;
  PhaseFit fit2;
  ErrorVariances sigmas;  ///< delta-weighted plug-ins
  PiEstimate pi1;
  PiEstimate pi2;
  ImputedResponses imputed;  ///< filled for Imputed only
  Eigen::VectorXd delta_hat() const { return fit1.beta_hat - fit2.beta_hat; }
};

/// Method-specific assembly: V-matrices as phase means of the method's
/// gdot, H per the method's formula, then M and z as for complete data.
ELAssembly assemble_missing(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& beta,
                            const Eigen::VectorXd& delta0, const MissingFit& fit);

struct PiSpec {
  PiSource source = PiSource::KernelEstimated;
  SelectionFn known1;  ///< used when source == Known
  SelectionFn known2;
  std::optional<double> bandwidth1;
  std::optional<double> bandwidth2;
  KernelFn kernel = epanechnikov;
  std::string kernel_name = "epanechnikov";
};

struct MissingOptions {
  NlsOptions nls;
  ProfileOptions profile;
  std::optional<Eigen::VectorXd> init1;
  std::optional<Eigen::VectorXd> init2;
  PiSpec pi;
};

/// Delta-weighted NLS fits, plug-in variances, selection probabilities and
/// (for Imputed) the imputed responses.
MissingFit fit_missing(const Dataset& data, const RegressionModel& model, MissingMethod method,
                       const MissingOptions& opts = {});

ELTestResult el_test_missing_fitted(const Dataset& data, const RegressionModel& model, const MissingFit& fit,
                                    const Eigen::VectorXd& delta0, double alpha, const MissingOptions& opts = {});

ELTestResult el_test_missing(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& delta0,
                             double alpha, MissingMethod method, const MissingOptions& opts = {});

StatisticFn missing_statistic(const Dataset& data, const RegressionModel& model, const MissingFit& fit,
                              const MissingOptions& opts = {});

RegionSummary region_summary_missing(const Dataset& data, const RegressionModel& model, double alpha,
                                     MissingMethod method, const std::optional<Eigen::VectorXd>& center = std::nullopt,
                                     const MissingOptions& opts = {}, const RegionOptions& region = {});

}  // namespace tpel
