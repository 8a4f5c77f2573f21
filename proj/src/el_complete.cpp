#include "tpel/el_complete.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tpel/errors.hpp"

namespace tpel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegligibleStatistic = 1e-9;

void require_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidArgument, std::string(what) + ": dimension mismatch");
}

}  // namespace

Eigen::VectorXd g_first(const RegressionModel& model, const Eigen::VectorXd& x, double y,
                        const Eigen::VectorXd& beta) {
  Jet jet;
  model.evaluate(x, beta, 1, jet);
  return jet.grad * (y - jet.value);
}

Eigen::VectorXd g_second(const RegressionModel& model, const Eigen::VectorXd& x, double y,
                         const Eigen::VectorXd& beta, const Eigen::VectorXd& delta0) {
  require_same_size(beta, delta0, "g_second");
  Jet jet;
  model.evaluate(x, beta, 1, jet);
  const double shifted = model.value(x, beta - delta0);
  return jet.grad * (y - shifted);
}

Eigen::MatrixXd gdot(const RegressionModel& model, const Eigen::VectorXd& x, double y, const Eigen::VectorXd& beta,
                     Phase phase, const Eigen::VectorXd& delta0) {
  Jet jet;
  model.evaluate(x, beta, 2, jet);
  if (phase == Phase::First) return jet.hess * (y - jet.value) - jet.grad * jet.grad.transpose();
  require_same_size(beta, delta0, "gdot");
  Jet shifted;
  model.evaluate(x, beta - delta0, 1, shifted);
  return jet.hess * (y - shifted.value) - jet.grad * shifted.grad.transpose();
}

ELAssembly finish_assembly(Eigen::MatrixXd g_I, Eigen::MatrixXd g_J, Eigen::MatrixXd V1, Eigen::MatrixXd V2,
                           Eigen::MatrixXd H) {
  const double k = static_cast<double>(g_I.cols());
  const double n = k + static_cast<double>(g_J.cols());
  ELAssembly a;
  a.M = (k * (n - k) / (n * n)) * V1 * H * V2;
  const auto eig = sym_eig(a.M);
  const double scale = eig.eigenvalues.cwiseAbs().maxCoeff();
  const double clip = 1e-8 * scale;
  // Under H0 the V-matrices estimate -V, so sym(M) is normally negative
  // definite; the statistic is invariant to the sign of z, so use -sym(M).
  a.sign_flipped = eig.eigenvalues.maxCoeff() <= 0.0;
  a.M_sqrt = principal_sqrt_psd(a.sign_flipped ? Eigen::MatrixXd(-a.M) : a.M, clip);
  a.z_I = a.M_sqrt * solve_linear(V1, g_I);
  a.z_J = a.M_sqrt * solve_linear(V2, g_J);
  a.g_I = std::move(g_I);
  a.g_J = std::move(g_J);
  a.V1 = std::move(V1);
  a.V2 = std::move(V2);
  a.H = std::move(H);
  return a;
}

ELAssembly assemble(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& beta,
                    const Eigen::VectorXd& delta0, const ErrorVariances& sigmas) {
  require_same_size(beta, delta0, "assemble");
  if (!(sigmas.first >= 0.0) || !(sigmas.second >= 0.0) || !std::isfinite(sigmas.first) ||
      !std::isfinite(sigmas.second)) {
    throw Error(ErrorKind::InvalidArgument, "assemble: error variances must be finite and non-negative");
  }
  const int d = model.d();
  const int n = data.n();
  const int k = data.k;
  Eigen::MatrixXd g_I(d, k), g_J(d, n - k);
  Eigen::MatrixXd V1 = Eigen::MatrixXd::Zero(d, d), V2 = Eigen::MatrixXd::Zero(d, d);
  const Eigen::VectorXd shifted_beta = beta - delta0;
  Jet jet, shifted;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = data.row_x(i);
    model.evaluate(x, beta, 2, jet);
    if (i < k) {
      const double r = data.y[i] - jet.value;
      g_I.col(i) = jet.grad * r;
      V1 += jet.hess * r - jet.grad * jet.grad.transpose();
    } else {
      model.evaluate(x, shifted_beta, 1, shifted);
      const double r = data.y[i] - shifted.value;
      g_J.col(i - k) = jet.grad * r;
      V2 += jet.hess * r - jet.grad * shifted.grad.transpose();
    }
  }
  V1 /= k;
  V2 /= (n - k);
  double s1 = sigmas.first;
  double s2 = sigmas.second;
  if (s1 == 0.0 && s2 == 0.0) {
    // Exact fits. The statistic does not depend on a common scale of H, so
    // any positive pair gives the same value.
    s1 = s2 = 1.0;
  }
  const double kn = static_cast<double>(k) / n;
  Eigen::MatrixXd H = inverse_checked(Eigen::MatrixXd(kn * s2 * V1 + (1.0 - kn) * s1 * V2));
  return finish_assembly(std::move(g_I), std::move(g_J), std::move(V1), std::move(V2), std::move(H));
}

// ---------------------------------------------------------------------------

namespace {

struct Arguments {
  Eigen::VectorXd a;  // lambda' z_i
  Eigen::VectorXd b;  // lambda' z_j
  double kn;          // k / n
  double mn;          // (n - k) / n
};

Arguments arguments(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda) {
  if (z_I.rows() != lambda.size() || z_J.rows() != lambda.size()) {
    throw Error(ErrorKind::InvalidArgument, "statistic: lambda and z have different dimensions");
  }
  const double k = static_cast<double>(z_I.cols());
  const double n = k + static_cast<double>(z_J.cols());
  return {z_I.transpose() * lambda, z_J.transpose() * lambda, k / n, (n - k) / n};
}

}  // namespace

bool lambda_feasible(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda) {
  const auto args = arguments(z_I, z_J, lambda);
  return ((args.kn + args.a.array()) > 0.0).all() && ((args.mn - args.b.array()) > 0.0).all();
}

double el_statistic(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda) {
  const auto args = arguments(z_I, z_J, lambda);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < args.a.size(); ++i) {
    const double u = args.a[i] / args.kn;
    if (!(u > -1.0)) throw Error(ErrorKind::InfeasibleLambda, "statistic: first-phase log argument <= 0");
    sum += std::log1p(u);
  }
  for (Eigen::Index j = 0; j < args.b.size(); ++j) {
    const double u = -args.b[j] / args.mn;
    if (!(u > -1.0)) throw Error(ErrorKind::InfeasibleLambda, "statistic: second-phase log argument <= 0");
    sum += std::log1p(u);
  }
  return 2.0 * sum;
}

Eigen::VectorXd el_score(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const Eigen::VectorXd& lambda) {
  const auto args = arguments(z_I, z_J, lambda);
  const Eigen::VectorXd wi = (args.kn + args.a.array()).inverse().matrix();
  const Eigen::VectorXd wj = (args.mn - args.b.array()).inverse().matrix();
  return z_I * wi - z_J * wj;
}

Eigen::MatrixXd el_score_jacobian(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J,
                                  const Eigen::VectorXd& lambda) {
  const auto args = arguments(z_I, z_J, lambda);
  const Eigen::VectorXd wi = (args.kn + args.a.array()).square().inverse().matrix();
  const Eigen::VectorXd wj = (args.mn - args.b.array()).square().inverse().matrix();
  return -(z_I * wi.asDiagonal() * z_I.transpose() + z_J * wj.asDiagonal() * z_J.transpose());
}

LambdaSolution solve_lambda(const Eigen::MatrixXd& z_I, const Eigen::MatrixXd& z_J, const LambdaOptions& opts,
                            const Eigen::VectorXd* warm_start) {
  const Eigen::Index d = z_I.rows();
  const double n = static_cast<double>(z_I.cols() + z_J.cols());
  const double kn = static_cast<double>(z_I.cols()) / n;
  const double mn = 1.0 - kn;
  const double tol = opts.tol_per_obs * n;

  auto feasible = [&](const Eigen::VectorXd& l) {
    const auto args = arguments(z_I, z_J, l);
    if (!(((kn + args.a.array()) > 0.0).all() && ((mn - args.b.array()) > 0.0).all())) return false;
    const double spread = std::max(args.a.cwiseAbs().maxCoeff() / kn, args.b.cwiseAbs().maxCoeff() / mn);
    return spread < opts.divergence_bound;
  };
  auto score = [&](const Eigen::VectorXd& l) { return el_score(z_I, z_J, l); };
  auto jacobian = [&](const Eigen::VectorXd& l) { return el_score_jacobian(z_I, z_J, l); };
  auto merit = [&](const Eigen::VectorXd& l) { return -0.5 * el_statistic(z_I, z_J, l); };

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(d);
  if (warm_start && warm_start->size() == d && warm_start->allFinite() && feasible(*warm_start)) x0 = *warm_start;

  NewtonOptions newton;
  newton.max_iter = opts.max_iter;
  newton.grad_tol = tol;
  NewtonResult res;
  try {
    res = damped_newton_root(score, jacobian, x0, feasible, newton, merit);
  } catch (const NoConvergenceError& e) {
    throw ConvexHullError(std::string("no interior maximizer in lambda (") + e.what() + ")", e.last_residual());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InfeasibleStep) {
      throw ConvexHullError(std::string("no interior maximizer in lambda (") + e.what() + ")", kInf);
    }
    throw;
  }

  // A few undamped steps past the tolerance make lambda smooth in beta, which
  // the outer finite differences rely on.
  Eigen::VectorXd x = res.x;
  Eigen::VectorXd r = res.residual;
  for (int polish = 0; polish < 3; ++polish) {
    if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * n) break;
    Eigen::VectorXd trial;
    try {
      trial = x + solve_linear(jacobian(x), -r);
    } catch (const Error&) {
      break;
    }
    if (!feasible(trial)) break;
    const Eigen::VectorXd rt = score(trial);
    if (!(rt.lpNorm<Eigen::Infinity>() < r.lpNorm<Eigen::Infinity>())) break;
    x = trial;
    r = rt;
  }

  LambdaSolution out;
  out.lambda = x;
  out.statistic = std::max(0.0, el_statistic(z_I, z_J, x));
  out.score_norm = r.lpNorm<Eigen::Infinity>();
  out.iterations = res.iterations;
  return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd el_score_beta(const AssembleFn& assemble_at, const ELAssembly& at_beta, const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& lambda, double rel_step) {
  const auto args = arguments(at_beta.z_I, at_beta.z_J, lambda);
  const Eigen::VectorXd wi = (args.kn + args.a.array()).inverse().matrix();
  const Eigen::VectorXd wj = (args.mn - args.b.array()).inverse().matrix();
  const Eigen::Index d = beta.size();
  Eigen::VectorXd phi2(d);
  Eigen::VectorXd b = beta;
  for (Eigen::Index c = 0; c < d; ++c) {
    const double h = rel_step * (1.0 + std::abs(beta[c]));
    b[c] = beta[c] + h;
    const ELAssembly plus = assemble_at(b);
    b[c] = beta[c] - h;
    const ELAssembly minus = assemble_at(b);
    b[c] = beta[c];
    if (plus.sign_flipped != at_beta.sign_flipped || minus.sign_flipped != at_beta.sign_flipped) {
      throw Error(ErrorKind::NotPsd, "definiteness of M changes within the finite-difference stencil");
    }
    const Eigen::RowVectorXd dzi = lambda.transpose() * (plus.z_I - minus.z_I) / (2.0 * h);
    const Eigen::RowVectorXd dzj = lambda.transpose() * (plus.z_J - minus.z_J) / (2.0 * h);
    phi2[c] = dzi.dot(wi) - dzj.dot(wj);
  }
  return phi2;
}

namespace {

struct ProfilePoint {
  ELAssembly assembly;
  LambdaSolution inner;
  Eigen::VectorXd phi2;
};

}  // namespace

ProfileResult profile_generic(const AssembleFn& assemble_at, const FeasiblePredicate& beta_ok,
                              const Eigen::VectorXd& beta_init, const ProfileOptions& opts) {
  if (opts.max_iter < 1 || !(opts.score_tol_per_obs > 0) || !(opts.z_fd_step > 0) || !(opts.jacobian_fd_step > 0)) {
    throw Error(ErrorKind::InvalidArgument, "ProfileOptions: iteration count and tolerances must be positive");
  }
  if (beta_ok && !beta_ok(beta_init)) {
    throw Error(ErrorKind::ParameterOutOfBounds, "profile: starting beta (or beta - delta0) is outside the domain");
  }
  auto evaluate = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd* warm) {
    ProfilePoint pt;
    pt.assembly = assemble_at(beta);
    pt.inner = solve_lambda(pt.assembly, opts.inner, warm);
    pt.phi2 = el_score_beta(assemble_at, pt.assembly, beta, pt.inner.lambda, opts.z_fd_step);
    return pt;
  };
  auto try_evaluate = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd* warm) -> std::optional<ProfilePoint> {
    if (beta_ok && !beta_ok(beta)) return std::nullopt;
    try {
      return evaluate(beta, warm);
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  Eigen::VectorXd beta = beta_init;
  ProfilePoint cur = evaluate(beta, nullptr);
  const double n = static_cast<double>(cur.assembly.n());
  const double tol = opts.score_tol_per_obs * n;
  const Eigen::Index d = beta.size();
  double mu = -1.0;
  constexpr int kMaxRidgeWalks = 3;
  constexpr int kMaxStalls = 2;
  int ridge_walks = 0;
  int stalls = 0;

  auto result = [&](int iterations) {
    ProfileResult out;
    out.lambda_hat = cur.inner.lambda;
    out.beta_hat = beta;
    out.statistic = cur.inner.statistic;
    out.score2 = cur.phi2;
    out.iterations = iterations;
    out.assembly = std::move(cur.assembly);
    return out;
  };

  for (int it = 0; it < opts.max_iter; ++it) {
    const double norm = cur.phi2.lpNorm<Eigen::Infinity>();
    // A negligible statistic at the starting point means an exact fit: the
    // z-vectors vanish there and finite-difference noise keeps phi_2 above
    // tolerance. Later iterates must satisfy phi_2 = 0 itself, because Z can
    // be driven towards zero far from the local root the test is built on.
    if (norm < tol || (it == 0 && cur.inner.statistic < kNegligibleStatistic)) return result(it);

    Eigen::MatrixXd J(d, d);
    for (Eigen::Index c = 0; c < d; ++c) {
      const double h = opts.jacobian_fd_step * (1.0 + std::abs(beta[c]));
      bool done = false;
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd probe = beta;
        probe[c] += sign * h;
        if (auto pt = try_evaluate(probe, &cur.inner.lambda)) {
          J.col(c) = sign * (pt->phi2 - cur.phi2) / h;
          done = true;
          break;
        }
      }
      if (!done) throw NoConvergenceError("profile: Jacobian probes failed around the current beta", norm);
    }

    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * cur.phi2;
    const Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-12 * std::max(1.0, JtJ.diagonal().maxCoeff()));
    if (mu < 0) mu = 1e-6;
    bool accepted = false;
    const double before = cur.phi2.squaredNorm();
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += mu * diag;
      Eigen::VectorXd step;
      try {
        step = -solve_linear(A, Jtr);
      } catch (const SingularMatrixError&) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = beta + step;
      if (auto pt = try_evaluate(trial, &cur.inner.lambda);
          pt && pt->phi2.squaredNorm() < cur.phi2.squaredNorm()) {
        beta = trial;
        cur = std::move(*pt);
        accepted = true;
        mu = std::max(mu / 10.0, 1e-12);
      } else {
        mu *= 4.0;
      }
    }
    // Steps that only shave roundoff off ||phi_2|| are a stall as well: the
    // damping then grows without bound and the ridge walk below never runs.
    if (accepted) stalls = cur.phi2.squaredNorm() < (1.0 - 1e-6) * before ? 0 : stalls + 1;
    if (!accepted || stalls > kMaxStalls) {
      stalls = 0;
      // The Gauss-Newton model stalls when J is nearly singular and phi_2
      // points along its null direction: P is then nearly linear in beta
      // there. Follow that direction to a root of its directional derivative.
      if (ridge_walks++ >= kMaxRidgeWalks) {
        throw NoConvergenceError("profile: no step on beta reduces the score", norm);
      }
      const Eigen::VectorXd v = cur.phi2.normalized();
      auto slope = [&](const ProfilePoint& pt) { return v.dot(pt.phi2); };
      const double s0 = 1e-3 * (1.0 + beta.lpNorm<Eigen::Infinity>());
      std::optional<ProfilePoint> far;
      double t_lo = 0.0, t_hi = 0.0;
      for (double sign : {1.0, -1.0}) {
        // Steps double while the walk stays evaluable and halve when it
        // leaves the region where the test is defined.
        double t_prev = 0.0;
        double step = sign * s0;
        int misses = 0;
        for (int j = 0; j < 48 && !far && misses < 12; ++j) {
          const double t = t_prev + step;
          auto pt = try_evaluate(beta + t * v, &cur.inner.lambda);
          if (!pt) {
            step *= 0.5;
            ++misses;
            continue;
          }
          if (slope(*pt) <= 0.0) {
            t_lo = t_prev;
            t_hi = t;
            far = std::move(pt);
          }
          t_prev = t;
          step *= 2.0;
        }
        if (far) break;
      }
      if (!far) throw NoConvergenceError("profile: no step on beta reduces the score", norm);
      std::optional<ProfilePoint> best = std::move(far);
      double t_best = t_hi;
      for (int j = 0; j < 40 && best->phi2.lpNorm<Eigen::Infinity>() >= tol; ++j) {
        const double t = 0.5 * (t_lo + t_hi);
        auto pt = try_evaluate(beta + t * v, &cur.inner.lambda);
        if (!pt) break;
        if (slope(*pt) > 0.0) {
          t_lo = t;
        } else {
          t_hi = t;
        }
        if (pt->phi2.squaredNorm() < best->phi2.squaredNorm() || slope(*pt) <= 0.0) {
          best = std::move(pt);
          t_best = t;
        }
        if (std::abs(t_hi - t_lo) < 1e-12 * (1.0 + beta.lpNorm<Eigen::Infinity>())) break;
      }
      beta += t_best * v;
      cur = std::move(*best);
      mu = -1.0;
    }
  }
  if (cur.phi2.lpNorm<Eigen::Infinity>() < tol) return result(opts.max_iter);
  throw NoConvergenceError("profile: iteration limit reached", cur.phi2.lpNorm<Eigen::Infinity>());
}

FeasiblePredicate profile_domain(const RegressionModel& model, const Eigen::VectorXd& delta0,
                                 const ProfileOptions& opts) {
  const Box box = model.domain();
  const double rel = 2.0 * std::max(opts.z_fd_step, opts.jacobian_fd_step);
  return [box, delta0, rel](const Eigen::VectorXd& beta) {
    if (beta.size() != box.size() || delta0.size() != box.size() || !beta.allFinite()) return false;
    const Eigen::VectorXd shifted = beta - delta0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      const double m = rel * (1.0 + std::max(std::abs(beta[j]), std::abs(shifted[j])));
      if (beta[j] - m < box.lower[j] || beta[j] + m > box.upper[j]) return false;
      if (shifted[j] - m < box.lower[j] || shifted[j] + m > box.upper[j]) return false;
    }
    return true;
  };
}

ProfileResult profile_beta(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& delta0,
                           const ErrorVariances& sigmas, const Eigen::VectorXd& beta_init,
                           const ProfileOptions& opts) {
  AssembleFn at = [&](const Eigen::VectorXd& beta) { return assemble(data, model, beta, delta0, sigmas); };
  return profile_generic(at, profile_domain(model, delta0, opts), beta_init, opts);
}

// ---------------------------------------------------------------------------

ELDiagnostics diagnostics(const ELAssembly& a) {
  const double k = a.k();
  const double n = a.n();
  ELDiagnostics out;
  out.psi = a.z_I.rowwise().mean() - a.z_J.rowwise().mean();
  out.S = (n / (k * k)) * a.z_I * a.z_I.transpose() + (n / ((n - k) * (n - k))) * a.z_J * a.z_J.transpose();
  return out;
}

namespace {

// One-sample dual: l with sum z / (1 + l'z) = 0, weights 1 / (m (1 + l'z)).
bool phase_dual(const Eigen::MatrixXd& z, Eigen::VectorXd& weights) {
  const double m = static_cast<double>(z.cols());
  auto feasible = [&](const Eigen::VectorXd& l) { return ((1.0 + (z.transpose() * l).array()) > 0.0).all(); };
  auto score = [&](const Eigen::VectorXd& l) -> Eigen::VectorXd {
    return z * (1.0 + (z.transpose() * l).array()).inverse().matrix();
  };
  auto jacobian = [&](const Eigen::VectorXd& l) -> Eigen::MatrixXd {
    const Eigen::VectorXd w = (1.0 + (z.transpose() * l).array()).square().inverse().matrix();
    return -(z * w.asDiagonal() * z.transpose());
  };
  auto merit = [&](const Eigen::VectorXd& l) { return -(1.0 + (z.transpose() * l).array()).log().sum(); };
  NewtonOptions opts;
  opts.grad_tol = 1e-11 * m;
  try {
    const auto res = damped_newton_root(score, jacobian, Eigen::VectorXd::Zero(z.rows()), feasible, opts, merit);
    weights = ((1.0 + (z.transpose() * res.x).array()) * m).inverse().matrix();
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

PhaseWeights implied_weights(const ELAssembly& a) {
  PhaseWeights w;
  w.available = phase_dual(a.z_I, w.p) && phase_dual(a.z_J, w.q);
  if (!w.available) {
    w.p.resize(0);
    w.q.resize(0);
  }
  return w;
}

ELTestResult decide(const AssembleFn& assemble_at, const FeasiblePredicate& beta_ok,
                    const std::vector<Eigen::VectorXd>& starts, double alpha, const ProfileOptions& opts) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  if (starts.empty()) throw Error(ErrorKind::InvalidArgument, "decide: no starting point");
  ELTestResult r;
  r.dof = static_cast<int>(starts.front().size());
  r.critical = chi2_quantile(1.0 - alpha, r.dof);
  std::optional<ProfileResult> prof;
  std::optional<Error> first_error;
  bool hull = false;
  for (std::size_t s = 0; s < starts.size() && !prof; ++s) {
    try {
      prof = profile_generic(assemble_at, beta_ok, starts[s], opts);
      r.start_index = static_cast<int>(s);
    } catch (const Error& e) {
      hull = hull || e.kind() == ErrorKind::ConvexHull;
      if (!first_error) first_error = e;
    }
  }
  if (!prof) {
    if (!hull) throw *first_error;
    r.hull_violation = true;
    r.statistic = kInf;
    r.p_value = 0.0;
    r.reject = true;
    r.beta_hat_profile = starts.front();
    return r;
  }
  r.statistic = prof->statistic;
  r.lambda_hat = prof->lambda_hat;
  r.beta_hat_profile = prof->beta_hat;
  r.p_value = 1.0 - chi2_cdf(r.statistic, r.dof);
  r.reject = r.statistic > r.critical;
  r.sign_flipped = prof->assembly.sign_flipped;
  r.profile_iterations = prof->iterations;
  r.score1 = el_score(prof->assembly.z_I, prof->assembly.z_J, prof->lambda_hat);
  r.score2 = prof->score2;
  r.diagnostics = diagnostics(prof->assembly);
  auto w = implied_weights(prof->assembly);
  r.weights_available = w.available;
  r.weights_I = std::move(w.p);
  r.weights_J = std::move(w.q);
  return r;
}

std::vector<Eigen::VectorXd> profile_starts(const Eigen::VectorXd& beta_first, const Eigen::VectorXd& beta_second,
                                            const Eigen::VectorXd& delta0) {
  const Eigen::VectorXd implied = beta_second + delta0;
  return {beta_first, 0.5 * (beta_first + implied), implied};
}

// ---------------------------------------------------------------------------

CompleteFit fit_complete(const Dataset& data, const RegressionModel& model, const CompleteOptions& opts) {
  data.validate(model.d(), false);
  CompleteFit out;
  const Eigen::VectorXd init1 = opts.init1 ? *opts.init1 : grid_search_init(data, Phase::First, model, false);
  const Eigen::VectorXd init2 = opts.init2 ? *opts.init2 : grid_search_init(data, Phase::Second, model, false);
  out.fit1 = fit_nls(data, Phase::First, model, init1, false, opts.nls);
  out.fit2 = fit_nls(data, Phase::Second, model, init2, false, opts.nls);
  out.sigmas = estimate_sigmas(data, model, out.fit1, out.fit2, false);
  return out;
}

ELTestResult el_test_fitted(const Dataset& data, const RegressionModel& model, const CompleteFit& fit,
                            const Eigen::VectorXd& delta0, double alpha, const CompleteOptions& opts) {
  if (delta0.size() != model.d() || !delta0.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "delta0 must be a finite vector of the parameter dimension");
  }
  AssembleFn at = [&](const Eigen::VectorXd& beta) { return assemble(data, model, beta, delta0, fit.sigmas); };
  return decide(at, profile_domain(model, delta0, opts.profile),
                profile_starts(fit.fit1.beta_hat, fit.fit2.beta_hat, delta0), alpha, opts.profile);
}

ELTestResult el_test(const Dataset& data, const RegressionModel& model, const Eigen::VectorXd& delta0, double alpha,
                     const CompleteOptions& opts) {
  return el_test_fitted(data, model, fit_complete(data, model, opts), delta0, alpha, opts);
}

// ---------------------------------------------------------------------------

bool is_region_exclusion(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConvexHull:
    case ErrorKind::NotPsd:
    case ErrorKind::ParameterOutOfBounds:
    case ErrorKind::SingularMatrix:
    case ErrorKind::NoConvergence:
    case ErrorKind::InfeasibleStep:
      return true;
    default:
      return false;
  }
}

RegionSummary region_summary_generic(const StatisticFn& statistic, double critical, const Eigen::VectorXd& center,
                                     const RegionOptions& opts) {
  if (!(opts.tolerance > 0) || !(opts.cap > 0) || !(opts.initial_step > 0)) {
    throw Error(ErrorKind::InvalidArgument, "RegionOptions: tolerance, cap and initial_step must be positive");
  }
  const Eigen::Index d = center.size();
  RegionSummary s;
  s.center = center;
  s.critical = critical;
  s.lower = center;
  s.upper = center;
  s.widths = Eigen::VectorXd::Zero(d);
  s.capped.assign(static_cast<std::size_t>(d), false);

  auto inside = [&](const Eigen::VectorXd& delta0) {
    ++s.evaluations;
    return statistic(delta0) <= critical;
  };
  if (!inside(center)) {
    s.degenerate = true;
    return s;
  }
  for (Eigen::Index c = 0; c < d; ++c) {
    for (double dir : {-1.0, 1.0}) {
      auto point = [&](double t) {
        Eigen::VectorXd v = center;
        v[c] += dir * t;
        return v;
      };
      double in = 0.0;
      double out = -1.0;
      for (double t = std::min(opts.initial_step, opts.cap);; t = std::min(2.0 * t, opts.cap)) {
        if (inside(point(t))) {
          in = t;
          if (t >= opts.cap) break;
        } else {
          out = t;
          break;
        }
      }
      double boundary;
      if (out < 0) {
        boundary = opts.cap;
        s.capped[static_cast<std::size_t>(c)] = true;
      } else {
        while (out - in > opts.tolerance) {
          const double mid = 0.5 * (in + out);
          (inside(point(mid)) ? in : out) = mid;
        }
        boundary = 0.5 * (in + out);
      }
      (dir < 0 ? s.lower : s.upper)[c] = center[c] + dir * boundary;
    }
  }
  s.widths = s.upper - s.lower;
  s.lcr = s.widths.sum();
  return s;
}

StatisticFn complete_statistic(const Dataset& data, const RegressionModel& model, const CompleteFit& fit,
                               const CompleteOptions& opts) {
  return [&data, &model, fit, opts](const Eigen::VectorXd& delta0) {
    try {
      return el_test_fitted(data, model, fit, delta0, 0.05, opts).statistic;
    } catch (const Error& e) {
      if (is_region_exclusion(e.kind())) return kInf;
      throw;
    }
  };
}

RegionSummary region_summary(const Dataset& data, const RegressionModel& model, double alpha,
                             const std::optional<Eigen::VectorXd>& center, const CompleteOptions& opts,
                             const RegionOptions& region) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  const CompleteFit fit = fit_complete(data, model, opts);
  const Eigen::VectorXd c = center ? *center : fit.delta_hat();
  return region_summary_generic(complete_statistic(data, model, fit, opts), chi2_quantile(1.0 - alpha, model.d()), c,
                                region);
}

}  // namespace tpel
