#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tpel/estimation.hpp"
#include "tpel/model.hpp"
#include "tpel/numerics.hpp"

namespace tpel {

/// H0: beta - beta_1 = delta0.
struct Hypothesis {
  Eigen::VectorXd delta0;
};

/// Per-method intermediate state at one beta. Estimating vectors and
/// z-scores are stored column-wise: g_I is d x k, g_J is d x (n - k).
struct ELAssembly {
  Eigen::MatrixXd g_I;
  Eigen::MatrixXd g_J;
  Eigen::MatrixXd V1;
  Eigen::MatrixXd V2;
  Eigen::MatrixXd H;
  Eigen::MatrixXd M;
  Eigen::MatrixXd M_sqrt;  ///< square root of sym(M), or of -sym(M) when sign_flipped
  Eigen::MatrixXd z_I;
  Eigen::MatrixXd z_J;
  bool sign_flipped = false;

  int d() const { return static_cast<int>(z_I.rows()); }
  int k() const { return static_cast<int>(z_I.cols()); }
  int n() const { return static_cast<int>(z_I.cols() + z_J.cols()); }
};

// ---------------------------------------------------------------------------
// Row-level estimating functions.

/// g_i(beta) = fdot(x, beta) (y - f(x, beta)).
Eigen::VectorXd g_first(const RegressionModel& model, const Eigen::VectorXd& x, double y,
                        const Eigen::VectorXd& beta);

/// g_j(beta) = fdot(x, beta) (y - f(x, beta - delta0)), the second-phase
/// vector built from the shifted response y* = y - f(x, beta - delta0) + f(x, beta).
Eigen::VectorXd g_second(const RegressionModel& model, const Eigen::VectorXd& x, double y,
                         const Eigen::VectorXd& beta, const Eigen::VectorXd& delta0);

/// Jacobian in beta of g_first (phase First) or g_second (phase Second):
///   fddot(beta) (y - f(beta)) - fdot(beta) fdot(beta)^T, resp.
///   fddot(beta) (y - f(beta - delta0)) - fdot(beta) fdot(beta - delta0)^T.
Eigen::MatrixXd gdot(const RegressionModel& model, const Eigen::VectorXd& x, double y, const Eigen::VectorXd& beta,
                     Phase phase, const Eigen::VectorXd& delta0);

// ---------------------------------------------------------------------------
// Assembly.

/// Completes an assembly from estimating vectors, V-matrices and H:
/// M = (k (n-k) / n^2) V1 H V2, M_sqrt from sym(M) (sign-flipped when sym(M)
/// is negative definite), z_I = M_sqrt V1^-1 g_I, z_J = M_sqrt V2^-1 g_J.
///
/// Throws SingularMatrixError for singular V1/V2 and NotPsdError when sym(M)
/// is indefinite beyond the clipping tolerance.
ELAssembly finish_assembly(Eigen::MatrixXd g_I, Eigen::MatrixXd g_J, Eigen::MatrixXd V1, Eigen::MatrixXd V2,
                           Eigen::MatrixXd H);

/// Complete-data assembly with H = [(k/n) s2 V1 + ((n-k)/n) s1 V2]^-1.
ELAssembly assemble(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& beta,
                    const Eigen::VectorXd& delta0, const ErrorVariances& sigmas);

// ---------------------------------------------------------------------------
// The statistic in lambda.

/// Z = 2 [sum_I log(1 + (n/k) l'z_i) + sum_J log(1 - (n/(n-k)) l'z_j)].
/// Throws InfeasibleLambda when some log argument is not positive.
double el_statistic(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda);
inline double el_statistic(const ELAssembly& a, const Eigen::VectorXd& lambda) {
  return el_statistic(a.z_I, a.z_J, lambda);
}

/// True when every log argument of the statistic is positive at lambda.
bool lambda_feasible(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda);

/// phi_1 = dZ / (2 dlambda) = sum_I z_i / (k/n + l'z_i) - sum_J z_j / ((n-k)/n - l'z_j).
Eigen::VectorXd el_score(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda);

/// d phi_1 / d lambda (negative semidefinite).
Eigen::MatrixXd el_score_jacobian(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J,
                                  const Eigen::VectorXd& lambda);

struct LambdaOptions {
  int max_iter = 100;
  double tol_per_obs = 1e-8;  ///< converged when ||phi_1||_inf < tol_per_obs * n
  /// |(n/k) l'z| beyond this means the maximizer ran off to infinity.
  double divergence_bound = 1e6;
};

struct LambdaSolution {
  Eigen::VectorXd lambda;
  double statistic = 0.0;
  double score_norm = 0.0;  ///< ||phi_1||_inf at lambda
  int iterations = 0;
};

/// Maximizes the concave map lambda -> Z by damped Newton on phi_1 from
/// `warm_start` (or 0 when absent or infeasible); every iterate stays feasible.
///
/// Throws ConvexHullError when no interior maximizer exists (0 is not in the
/// convex hull the statistic requires) or Newton cannot reach the tolerance.
LambdaSolution solve_lambda(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const LambdaOptions& opts = {},
                            const Eigen::VectorXd* warm_start = nullptr);
inline LambdaSolution solve_lambda(const ELAssembly& a, const LambdaOptions& opts = {},
                                   const Eigen::VectorXd* warm_start = nullptr) {
  return solve_lambda(a.z_I, a.z_J, opts, warm_start);
}

// ---------------------------------------------------------------------------
// Profiling over beta.

/// beta -> assembly at beta for a fixed hypothesis and method.
using AssembleFn = std::function<ELAssembly(const Eigen::VectorXd& beta)>;

struct ProfileOptions {
  int max_iter = 50;
  double score_tol_per_obs = 1e-6;  ///< converged when ||phi_2||_inf < score_tol_per_obs * n
  double z_fd_step = 1e-6;          ///< relative step for the z-map derivatives
  double jacobian_fd_step = 1e-5;   ///< relative step for the outer Jacobian of phi_2
  LambdaOptions inner;
};

struct ProfileResult {
  Eigen::VectorXd lambda_hat;
  Eigen::VectorXd beta_hat;
  double statistic = 0.0;
  Eigen::VectorXd score2;  ///< phi_2 at the solution
  int iterations = 0;
  ELAssembly assembly;     ///< assembly at beta_hat
};

/// phi_2 = sum_I zdot_i' l / (k/n + l'z_i) - sum_J zdot_j' l / ((n-k)/n - l'z_j)
/// with the zdot terms from central differences of the z maps.
Eigen::VectorXd el_score_beta(const AssembleFn& assemble_at, const ELAssembly& at_beta, const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& lambda, double rel_step);

/// Solves phi_1 = phi_2 = 0: inner maximization in lambda at each beta and an
/// outer Levenberg-damped step on beta targeting phi_2 = 0, with the outer
/// Jacobian from forward differences. `beta_ok` restricts the outer iterates
/// (domain membership including the finite-difference margin). A starting
/// point whose statistic is below 1e-9 (an exact fit) is accepted as is.
///
/// Throws NoConvergenceError on outer failure; ConvexHullError, NotPsdError
/// and SingularMatrixError from the starting point propagate.
ProfileResult profile_generic(const AssembleFn& assemble_at, const FeasiblePredicate& beta_ok,
                              const Eigen::VectorXd& beta_init, const ProfileOptions& opts = {});

/// Builds the predicate "beta and beta - delta0, with a margin for the
/// finite-difference probes, lie inside the model domain".
FeasiblePredicate profile_domain(const RegressionModel& model, const Eigen::VectorXd& delta0,
                                 const ProfileOptions& opts);

/// Complete-data profile from `beta_init` (typically the first-phase fit).
ProfileResult profile_beta(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& delta0,
                           const ErrorVariances& sigmas, const Eigen::VectorXd& beta_init,
                           const ProfileOptions& opts = {});

// ---------------------------------------------------------------------------
// Test results.

struct ELDiagnostics {
  Eigen::VectorXd psi;  ///< mean_I z - mean_J z
  Eigen::MatrixXd S;    ///< (n/k^2) sum_I z z' + (n/(n-k)^2) sum_J z z'
};

ELDiagnostics diagnostics(const ELAssembly& a);

struct PhaseWeights {
  Eigen::VectorXd p;  ///< first-phase weights
  Eigen::VectorXd q;  ///< second-phase weights
  bool available = false;
};

/// Dual weights p_i = 1 / (k (1 + l1'z_i)) and q_j = 1 / ((n-k)(1 + l2'z_j)),
/// with the per-phase multipliers l1, l2 chosen so that each phase's weights
/// satisfy their defining constraints sum p = 1 and sum p z = 0 exactly.
/// `available` is false when a phase has no interior solution.
PhaseWeights implied_weights(const ELAssembly& a);

struct ELTestResult {
  double statistic = 0.0;
  Eigen::VectorXd lambda_hat;
  Eigen::VectorXd beta_hat_profile;
  int dof = 0;
  double critical = 0.0;
  double p_value = 1.0;
  bool reject = false;
  bool hull_violation = false;  ///< no feasible maximizer; statistic is +inf
  Eigen::VectorXd weights_I;
  Eigen::VectorXd weights_J;
  bool weights_available = false;
  ELDiagnostics diagnostics;
  bool sign_flipped = false;
  int profile_iterations = 0;
  int start_index = 0;     ///< which starting point the profile converged from
  Eigen::VectorXd score1;  ///< phi_1 at the solution
  Eigen::VectorXd score2;  ///< phi_2 at the solution
};

/// Runs the profile from each start in turn until one converges and turns
/// it into a chi^2_d decision at level alpha. When every start fails and one
/// of them hit the convex-hull condition, the result is reject = true with
/// statistic = +inf and hull_violation set; otherwise the first start's
/// error propagates.
ELTestResult decide(const AssembleFn& assemble_at, const FeasiblePredicate& beta_ok,
                    const std::vector<Eigen::VectorXd>& starts, double alpha, const ProfileOptions& opts = {});

/// Starting points for the profile: the first-phase fit, then the midpoint
/// of it and the second-phase fit shifted by delta0, then the shifted fit.
/// The score system can have several roots; trying the first-phase fit first
/// keeps the solution nearest the default start whenever it is reachable.
std::vector<Eigen::VectorXd> profile_starts(const Eigen::VectorXd& beta_first, const Eigen::VectorXd& beta_second,
                                            const Eigen::VectorXd& delta0);

/// Phase fits and variance plug-ins, reusable across hypotheses.
struct CompleteFit {
  PhaseFit fit1;
  PhaseFit fit2;
  ErrorVariances sigmas;
  Eigen::VectorXd delta_hat() const { return fit1.beta_hat - fit2.beta_hat; }
};

struct CompleteOptions {
  NlsOptions nls;
  ProfileOptions profile;
  std::optional<Eigen::VectorXd> init1;  ///< NLS start, phase 1 (default: grid search)
  std::optional<Eigen::VectorXd> init2;  ///< NLS start, phase 2 (default: grid search)
};

CompleteFit fit_complete(const Dataset& data, const RegressionModel& model, const CompleteOptions& opts = {});

ELTestResult el_test_fitted(const Dataset& data, const RegressionModel& model, const CompleteFit& fit,
                            const Eigen::VectorXd& delta0, double alpha, const CompleteOptions& opts = {});

/// NLS fits, variance plug-ins, profile and chi^2_d decision.
ELTestResult el_test(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& delta0, double alpha,
                     const CompleteOptions& opts = {});

// ---------------------------------------------------------------------------
// Confidence regions.

/// delta0 -> statistic at delta0 (+inf when delta0 is outside the region for
/// structural reasons: hull failure, out of domain, indefinite M).
using StatisticFn = std::function<double(const Eigen::VectorXd& delta0)>;

struct RegionOptions {
  double tolerance = 1e-3;  ///< bisection tolerance in delta units
  double cap = 50.0;        ///< largest half-width searched per direction
  double initial_step = 0.05;
};

struct RegionSummary {
  Eigen::VectorXd center;
  Eigen::VectorXd lower;   ///< per-axis lower boundary
  Eigen::VectorXd upper;   ///< per-axis upper boundary
  Eigen::VectorXd widths;  ///< upper - lower
  double lcr = 0.0;        ///< sum of widths
  double critical = 0.0;
  bool degenerate = false;           ///< the center itself is outside the region
  std::vector<bool> capped;          ///< a boundary was not found within `cap`
  int evaluations = 0;
};

/// Per-axis boundaries of {delta0 : statistic(delta0) <= critical} through
/// `center`, by outward doubling and bisection.
RegionSummary region_summary_generic(const StatisticFn& statistic, double critical, const Eigen::VectorXd& center,
                                     const RegionOptions& opts = {});

/// Statistic callback for the complete-data method; structural failures map
/// to +inf, anything else propagates.
StatisticFn complete_statistic(const Dataset& data, const RegressionModel& model, const CompleteFit& fit,
                               const CompleteOptions& opts = {});

/// Complete-data region around `center` (default: delta_hat from the fits).
RegionSummary region_summary(const Dataset& data, const RegressionModel& model, double alpha,
                             const std::optional<Eigen::VectorXd>& center = std::nullopt,
                             const CompleteOptions& opts = {}, const RegionOptions& region = {});

/// Maps the structural error kinds that put a hypothesis outside the region
/// to true.
bool is_region_exclusion(ErrorKind kind);

}  // namespace tpel
