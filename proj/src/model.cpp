#include "tpel/model.hpp"

#include <algorithm>
#include <cmath>

#include "tpel/errors.hpp"

namespace tpel {

bool Box::contains(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != lower.size()) return false;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (!(v[j] >= lower[j] && v[j] <= upper[j])) return false;
  }
  return true;
}

Eigen::VectorXd Box::clamp(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return v.cwiseMax(lower).cwiseMin(upper);
}

namespace {

constexpr double kFallbackStep = 1e-6;

Eigen::VectorXd fd_gradient(const RegressionModel::ValueFn& f, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& beta, double rel_step) {
  Eigen::VectorXd g(beta.size());
  Eigen::VectorXd b = beta;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double h = rel_step * (1.0 + std::abs(beta[j]));
    b[j] = beta[j] + h;
    const double fp = f(x, b);
    b[j] = beta[j] - h;
    const double fm = f(x, b);
    b[j] = beta[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian_of_grad(const RegressionModel::GradFn& grad, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& beta, double rel_step) {
  const Eigen::Index d = beta.size();
  Eigen::MatrixXd h(d, d);
  Eigen::VectorXd b = beta;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double step = rel_step * (1.0 + std::abs(beta[j]));
    b[j] = beta[j] + step;
    const Eigen::VectorXd gp = grad(x, b);
    b[j] = beta[j] - step;
    const Eigen::VectorXd gm = grad(x, b);
    b[j] = beta[j];
    h.col(j) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

// Second differences of f alone need a larger step than FD of an analytic
// gradient: the rounding error scales like eps / h^2.
Eigen::MatrixXd fd_hessian_of_value(const RegressionModel::ValueFn& f, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& beta) {
  constexpr double rel_step = 1e-4;
  const Eigen::Index d = beta.size();
  Eigen::MatrixXd h(d, d);
  Eigen::VectorXd b = beta;
  const double f0 = f(x, beta);
  for (Eigen::Index r = 0; r < d; ++r) {
    const double hr = rel_step * (1.0 + std::abs(beta[r]));
    for (Eigen::Index s = r; s < d; ++s) {
      const double hs = rel_step * (1.0 + std::abs(beta[s]));
      if (r == s) {
        b[r] = beta[r] + hr;
        const double fp = f(x, b);
        b[r] = beta[r] - hr;
        const double fm = f(x, b);
        b[r] = beta[r];
        h(r, r) = (fp - 2.0 * f0 + fm) / (hr * hr);
      } else {
        auto at = [&](double dr, double ds) {
          b[r] = beta[r] + dr;
          b[s] = beta[s] + ds;
          const double v = f(x, b);
          b[r] = beta[r];
          b[s] = beta[s];
          return v;
        };
        h(r, s) = (at(hr, hs) - at(hr, -hs) - at(-hr, hs) + at(-hr, -hs)) / (4.0 * hr * hs);
        h(s, r) = h(r, s);
      }
    }
  }
  return h;
}

}  // namespace

RegressionModel RegressionModel::from_functions(std::string id, Box domain, Box design, ValueFn f,
                                                GradFn grad, HessFn hess) {
  if (!f) throw Error(ErrorKind::InvalidArgument, "regression model needs a value function");
  if (domain.lower.size() != domain.upper.size() || domain.lower.size() < 1 ||
      design.lower.size() != design.upper.size() || design.lower.size() < 1) {
    throw Error(ErrorKind::InvalidArgument, "regression model bounds are malformed");
  }
  GradFn g = grad ? std::move(grad) : GradFn([f](const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
    return fd_gradient(f, x, b, kFallbackStep);
  });
  HessFn h;
  if (hess) {
    h = std::move(hess);
  } else if (grad) {
    h = [g](const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
      return fd_jacobian_of_grad(g, x, b, kFallbackStep);
    };
  } else {
    h = [f](const Eigen::VectorXd& x, const Eigen::VectorXd& b) { return fd_hessian_of_value(f, x, b); };
  }
  JetFn jet = [f, g, h](const Eigen::VectorXd& x, const Eigen::VectorXd& b, int order, Jet& out) {
    out.value = f(x, b);
    if (order >= 1) out.grad = g(x, b);
    if (order >= 2) out.hess = h(x, b);
  };
  return RegressionModel(std::move(id), std::move(domain), std::move(design), std::move(jet));
}

RegressionModel RegressionModel::from_jet(std::string id, Box domain, Box design, JetFn jet) {
  if (!jet) throw Error(ErrorKind::InvalidArgument, "regression model needs an evaluator");
  return RegressionModel(std::move(id), std::move(domain), std::move(design), std::move(jet));
}

void RegressionModel::check_inputs(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const {
  if (beta.size() != domain_.size()) {
    throw Error(ErrorKind::InvalidArgument, "parameter vector has dimension " + std::to_string(beta.size()) +
                                                ", model '" + id_ + "' expects " + std::to_string(d()));
  }
  if (x.size() != design_.size()) {
    throw Error(ErrorKind::InvalidArgument, "regressor vector has dimension " + std::to_string(x.size()) +
                                                ", model '" + id_ + "' expects " + std::to_string(p()));
  }
  if (!domain_.contains(beta)) {
    throw Error(ErrorKind::ParameterOutOfBounds, "parameter outside the domain of model '" + id_ + "'");
  }
  if (!x.allFinite() || !design_.contains(x)) {
    throw Error(ErrorKind::RegressorOutOfBounds, "regressor outside the design region of model '" + id_ + "'");
  }
}

void RegressionModel::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& beta, int order, Jet& out) const {
  check_inputs(x, beta);
  jet_(x, beta, order, out);
  bool finite = std::isfinite(out.value);
  if (order >= 1) finite = finite && out.grad.allFinite();
  if (order >= 2) finite = finite && out.hess.allFinite();
  if (!finite) throw Error(ErrorKind::NumericOverflow, "non-finite evaluation of model '" + id_ + "'");
}

double RegressionModel::value(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const {
  Jet j;
  evaluate(x, beta, 0, j);
  return j.value;
}

Eigen::VectorXd RegressionModel::grad(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const {
  Jet j;
  evaluate(x, beta, 1, j);
  return j.grad;
}

Eigen::MatrixXd RegressionModel::hess(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const {
  Jet j;
  evaluate(x, beta, 2, j);
  return j.hess;
}

RegressionModel paper_ratio_model() {
  Box domain{Eigen::Vector2d(-100.0, 0.1), Eigen::Vector2d(100.0, 20.0)};
  Box design{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
  auto jet = [](const Eigen::VectorXd& xv, const Eigen::VectorXd& beta, int order, Jet& out) {
    const double x = xv[0];
    const double a = beta[0];
    const double b = beta[1];
    const double u = std::pow(x, b);
    // x^b ln x -> 0 as x -> 0+ for b > 0.
    const double lnx = x > 0.0 ? std::log(x) : 0.0;
    const double one_minus_u = 1.0 - u;
    out.value = a * one_minus_u / b;
    if (order < 1) return;
    // numer = d/db [ (1 - x^b) ] * b - (1 - x^b) = -u ln(x) b - (1 - u)
    const double numer = -u * lnx * b - one_minus_u;
    out.grad.resize(2);
    out.grad[0] = one_minus_u / b;
    out.grad[1] = a * numer / (b * b);
    if (order < 2) return;
    out.hess.resize(2, 2);
    out.hess(0, 0) = 0.0;
    out.hess(0, 1) = numer / (b * b);
    out.hess(1, 0) = out.hess(0, 1);
    out.hess(1, 1) = a * (-u * lnx * lnx / b - 2.0 * numer / (b * b * b));
  };
  return RegressionModel::from_jet("paper-ratio", std::move(domain), std::move(design), jet);
}

std::vector<std::string> builtin_model_ids() { return {"paper-ratio"}; }

RegressionModel model_by_id(std::string_view id) {
  if (id == "paper-ratio") return paper_ratio_model();
  throw Error(ErrorKind::InvalidArgument, "unknown model id '" + std::string(id) + "'");
}

double eval_f(const RegressionModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  return model.value(x, beta);
}

Eigen::VectorXd eval_grad(const RegressionModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  return model.grad(x, beta);
}

Eigen::MatrixXd eval_hess(const RegressionModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& beta) {
  return model.hess(x, beta);
}

DerivativeReport check_derivatives(const RegressionModel& model, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& beta, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be positive");
  const Eigen::Index d = beta.size();
  Jet center;
  model.evaluate_raw(x, beta, 2, center);

  Eigen::VectorXd fd_grad(d);
  Eigen::MatrixXd fd_hess(d, d);
  Eigen::VectorXd b = beta;
  Jet plus, minus;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double h = step * (1.0 + std::abs(beta[j]));
    b[j] = beta[j] + h;
    model.evaluate_raw(x, b, 1, plus);
    b[j] = beta[j] - h;
    model.evaluate_raw(x, b, 1, minus);
    b[j] = beta[j];
    fd_grad[j] = (plus.value - minus.value) / (2.0 * h);
    fd_hess.col(j) = (plus.grad - minus.grad) / (2.0 * h);
  }

  DerivativeReport report;
  report.grad_rel_error =
      (center.grad - fd_grad).lpNorm<Eigen::Infinity>() / std::max(1.0, center.grad.lpNorm<Eigen::Infinity>());
  const double hess_scale = std::max(1.0, center.hess.cwiseAbs().maxCoeff());
  report.hess_rel_error = (center.hess - fd_hess).cwiseAbs().maxCoeff() / hess_scale;
  report.hess_asymmetry = (center.hess - center.hess.transpose()).cwiseAbs().maxCoeff() / hess_scale;
  return report;
}

}  // namespace tpel
