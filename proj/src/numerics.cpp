#include "tpel/numerics.hpp"

namespace tpel {

void NewtonOptions::validate() const {
  if (max_iter < 1 || !(grad_tol > 0) || !(step_tol > 0) || !(min_step > 0) ||
      !(backtrack_ratio > 0 && backtrack_ratio < 1)) {
    throw Error(ErrorKind::InvalidArgument, "NewtonOptions: all fields must be positive and backtrack_ratio < 1");
  }
}

NewtonResult damped_newton_root(const VectorField& F, const JacobianField& J, const Eigen::VectorXd& x0,
                                const FeasiblePredicate& feasible, const NewtonOptions& opts,
                                const MeritFunction& merit) {
  opts.validate();
  if (feasible && !feasible(x0)) throw Error(ErrorKind::InfeasibleStep, "damped_newton_root: x0 is infeasible");

  auto half_sq = [](const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); };

  NewtonResult out;
  out.x = x0;
  out.residual = F(out.x);
  double m = merit ? merit(out.x) : half_sq(out.residual);

  for (int it = 0; it < opts.max_iter; ++it) {
    out.iterations = it;
    if (out.residual.lpNorm<Eigen::Infinity>() <= opts.grad_tol) return out;

    const Eigen::VectorXd step = solve_linear(J(out.x), -out.residual);
    if (step.lpNorm<Eigen::Infinity>() <= opts.step_tol * (1.0 + out.x.lpNorm<Eigen::Infinity>())) {
      throw NoConvergenceError("damped_newton_root: step stalled", out.residual.lpNorm<Eigen::Infinity>());
    }

    bool any_feasible = false;
    bool accepted = false;
    for (double t = 1.0; t >= opts.min_step; t *= opts.backtrack_ratio) {
      const Eigen::VectorXd trial = out.x + t * step;
      if (feasible && !feasible(trial)) continue;
      any_feasible = true;
      const Eigen::VectorXd r = F(trial);
      const double mt = merit ? merit(trial) : half_sq(r);
      // Close to a root the merit can stop resolving progress in floating
      // point while the full Newton step still shrinks the residual.
      const bool residual_shrinks = t == 1.0 && r.lpNorm<Eigen::Infinity>() < out.residual.lpNorm<Eigen::Infinity>();
      if (std::isfinite(mt) && (mt < m || residual_shrinks)) {
        out.x = trial;
        out.residual = r;
        m = mt;
        accepted = true;
        break;
      }
    }
    if (!any_feasible) throw Error(ErrorKind::InfeasibleStep, "damped_newton_root: no feasible step");
    if (!accepted) {
      throw NoConvergenceError("damped_newton_root: line search failed", out.residual.lpNorm<Eigen::Infinity>());
    }
  }
  out.iterations = opts.max_iter;
  if (out.residual.lpNorm<Eigen::Infinity>() <= opts.grad_tol) return out;
  throw NoConvergenceError("damped_newton_root: iteration limit reached", out.residual.lpNorm<Eigen::Infinity>());
}

}  // namespace tpel
