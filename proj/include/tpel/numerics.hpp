#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "tpel/errors.hpp"

namespace tpel {

/// Condition estimates above this are treated as singular.
inline constexpr double kMaxCondition = 1e12;

template <typename Derived>
using PlainMatrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Derived>
using PlainVector = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;

/// Solves A x = b by partial-pivot LU. Throws SingularMatrixError when the LU
/// reciprocal condition estimate puts cond(A) above kMaxCondition.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, DerivedB::ColsAtCompileTime> solve_linear(
    const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (A.rows() != A.cols() || A.rows() != b.rows()) {
    throw Error(ErrorKind::InvalidArgument, "solve_linear: dimension mismatch");
  }
  if (!A.allFinite() || !b.allFinite()) {
    throw Error(ErrorKind::NumericOverflow, "solve_linear: non-finite input");
  }
  const Eigen::PartialPivLU<PlainMatrix<DerivedA>> lu(A);
  const Scalar rcond = lu.rcond();
  if (!(rcond * Scalar(kMaxCondition) >= Scalar(1))) {
    throw SingularMatrixError(rcond > Scalar(0) ? double(Scalar(1) / rcond)
                                                : std::numeric_limits<double>::infinity());
  }
  return lu.solve(b);
}

/// Checked inverse, same singularity rule as solve_linear.
template <typename Derived>
PlainMatrix<Derived> inverse_checked(const Eigen::MatrixBase<Derived>& A) {
  return solve_linear(A, PlainMatrix<Derived>::Identity(A.rows(), A.cols()));
}

template <typename Scalar>
struct SymEig {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvalues;               ///< ascending
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eigenvectors;  ///< orthonormal columns
};

/// Eigendecomposition of (M + M^T) / 2.
template <typename Derived>
SymEig<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& M) {
  const PlainMatrix<Derived> sym = (M + M.transpose()) / typename Derived::Scalar(2);
  const Eigen::SelfAdjointEigenSolver<PlainMatrix<Derived>> es(sym);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NumericOverflow, "symmetric eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// Principal square root of the symmetric part of M. Eigenvalues in
/// [-clip_tol, 0) are clipped to zero; anything below -clip_tol throws
/// NotPsdError carrying the minimum eigenvalue.
template <typename Derived>
PlainMatrix<Derived> principal_sqrt_psd(const Eigen::MatrixBase<Derived>& M, typename Derived::Scalar clip_tol) {
  using Scalar = typename Derived::Scalar;
  const auto eig = sym_eig(M);
  const Scalar min_ev = eig.eigenvalues.minCoeff();
  if (min_ev < -clip_tol) throw NotPsdError(double(min_ev));
  const auto roots = eig.eigenvalues.cwiseMax(Scalar(0)).cwiseSqrt();
  return eig.eigenvectors * roots.asDiagonal() * eig.eigenvectors.transpose();
}

/// Same, with the default clipping tolerance 1e-8 * ||sym(M)||_2.
template <typename Derived>
PlainMatrix<Derived> principal_sqrt_psd(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  const auto eig = sym_eig(M);
  const Scalar scale = eig.eigenvalues.cwiseAbs().maxCoeff();
  return principal_sqrt_psd(M, Scalar(1e-8) * scale);
}

/// Regularized lower incomplete gamma P(a, x), by the power series for
/// x < a + 1 and by Lentz's continued fraction for Q = 1 - P otherwise.
template <typename Real>
Real regularized_gamma_p(Real a, Real x) {
  if (!(a > Real(0))) throw Error(ErrorKind::InvalidArgument, "regularized_gamma_p: a must be positive");
  if (x <= Real(0)) return Real(0);
  if (std::isinf(x)) return Real(1);
  constexpr Real eps = std::numeric_limits<Real>::epsilon();
  constexpr int max_terms = 10000;
  const Real log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + Real(1)) {
    Real ap = a;
    Real term = Real(1) / a;
    Real sum = term;
    for (int n = 0; n < max_terms; ++n) {
      ap += Real(1);
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::min(Real(1), sum * std::exp(log_prefactor));
  }
  constexpr Real tiny = std::numeric_limits<Real>::min() / eps;
  Real b = x + Real(1) - a;
  Real c = Real(1) / tiny;
  Real d = Real(1) / b;
  Real h = d;
  for (int i = 1; i < max_terms; ++i) {
    const Real an = -Real(i) * (Real(i) - a);
    b += Real(2);
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = Real(1) / d;
    const Real delta = d * c;
    h *= delta;
    if (std::abs(delta - Real(1)) < eps) break;
  }
  return std::max(Real(0), Real(1) - std::exp(log_prefactor) * h);
}

template <typename Real>
Real chi2_cdf(Real q, int dof) {
  if (dof < 1) throw Error(ErrorKind::InvalidArgument, "chi2_cdf: dof must be >= 1");
  return regularized_gamma_p(Real(dof) / Real(2), q / Real(2));
}

template <typename Real>
Real chi2_pdf(Real q, int dof) {
  if (q <= Real(0)) return Real(0);
  const Real a = Real(dof) / Real(2);
  return std::exp((a - Real(1)) * std::log(q / Real(2)) - q / Real(2) - std::lgamma(a)) / Real(2);
}

/// Quantile of chi^2_dof by bracketed Newton on the CDF, falling back to
/// bisection whenever a Newton step leaves the bracket.
template <typename Real>
Real chi2_quantile(Real p, int dof) {
  if (!(p > Real(0) && p < Real(1))) throw Error(ErrorKind::InvalidArgument, "chi2_quantile: p must be in (0, 1)");
  if (dof < 1) throw Error(ErrorKind::InvalidArgument, "chi2_quantile: dof must be >= 1");
  Real lo = Real(0);
  Real hi = std::max(Real(dof), Real(1));
  while (chi2_cdf(hi, dof) < p) {
    lo = hi;
    hi *= Real(2);
  }
  Real q = Real(0.5) * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const Real resid = chi2_cdf(q, dof) - p;
    if (std::abs(resid) <= Real(1e-14)) break;
    if (resid > Real(0)) {
      hi = q;
    } else {
      lo = q;
    }
    const Real slope = chi2_pdf(q, dof);
    Real next = slope > Real(0) ? q - resid / slope : lo - Real(1);
    if (!(next > lo && next < hi)) next = Real(0.5) * (lo + hi);
    if (std::abs(next - q) <= std::numeric_limits<Real>::epsilon() * std::max(Real(1), q)) {
      q = next;
      break;
    }
    q = next;
  }
  return q;
}

struct NewtonOptions {
  int max_iter = 100;
  double grad_tol = 1e-10;        ///< converged when ||F||_inf <= grad_tol
  double step_tol = 1e-15;        ///< relative step below which progress has stalled
  double backtrack_ratio = 0.5;   ///< step shrink factor, in (0, 1)
  double min_step = 1e-12;        ///< smallest step length tried before giving up

  void validate() const;
};

struct NewtonResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  int iterations = 0;
};

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianField = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
using FeasiblePredicate = std::function<bool(const Eigen::VectorXd&)>;
using MeritFunction = std::function<double(const Eigen::VectorXd&)>;

/// Newton's method for F(x) = 0 with step halving. A trial point is accepted
/// only if it is feasible and lowers the merit function (1/2 ||F||^2 unless a
/// custom merit is supplied), so F is never evaluated outside the feasible set.
///
/// Throws NoConvergenceError after max_iter iterations or when the line search
/// stalls at a feasible point, InfeasibleStepError-kind Error when no feasible
/// trial point is found down to min_step.
NewtonResult damped_newton_root(const VectorField& F, const JacobianField& J, const Eigen::VectorXd& x0,
                                const FeasiblePredicate& feasible, const NewtonOptions& opts,
                                const MeritFunction& merit = {});

}  // namespace tpel
