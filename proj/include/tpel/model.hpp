#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace tpel {

/// Closed per-coordinate interval box, used both for the parameter domain and
/// for the regressor design region.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index size() const { return lower.size(); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd clamp(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd width() const { return upper - lower; }
};

/// Value, parameter gradient and parameter Hessian of f at one (x, beta).
/// `order` selects how much was filled: 0 value, 1 + grad, 2 + hess.
struct Jet {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

/// A regression function f(x, beta) known up to a d-dimensional parameter,
/// with exact (or finite-difference fallback) first and second derivatives
/// in beta.
///
/// Every checked evaluation rejects beta outside `domain()` and x outside
/// `design()`; nothing is clamped silently. Evaluators are pure, so a model
/// may be shared read-only across threads.
class RegressionModel {
 public:
  using ValueFn = std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& beta)>;
  using GradFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& beta)>;
  using HessFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd& x, const Eigen::VectorXd& beta)>;
  using JetFn = std::function<void(const Eigen::VectorXd& x, const Eigen::VectorXd& beta, int order, Jet& out)>;

  /// Builds a model from an evaluator triple. A missing gradient or Hessian is
  /// replaced by central finite differences with step 1e-6 * (1 + |beta_j|).
  static RegressionModel from_functions(std::string id, Box domain, Box design, ValueFn f,
                                        GradFn grad = {}, HessFn hess = {});

  /// Builds a model from a fused evaluator that fills a Jet up to `order`.
  static RegressionModel from_jet(std::string id, Box domain, Box design, JetFn jet);

  const std::string& id() const { return id_; }
  int d() const { return static_cast<int>(domain_.size()); }
  int p() const { return static_cast<int>(design_.size()); }
  const Box& domain() const { return domain_; }
  const Box& design() const { return design_; }

  /// Checked fused evaluation; `out` is resized as needed and can be reused.
  void evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& beta, int order, Jet& out) const;

  double value(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const;
  Eigen::MatrixXd hess(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const;

  /// Unchecked access for finite-difference probes that may step just past
  /// the domain boundary.
  void evaluate_raw(const Eigen::VectorXd& x, const Eigen::VectorXd& beta, int order, Jet& out) const {
    jet_(x, beta, order, out);
  }

 private:
  RegressionModel(std::string id, Box domain, Box design, JetFn jet)
      : id_(std::move(id)), domain_(std::move(domain)), design_(std::move(design)), jet_(std::move(jet)) {}

  void check_inputs(const Eigen::VectorXd& x, const Eigen::VectorXd& beta) const;

  std::string id_;
  Box domain_;
  Box design_;
  JetFn jet_;
};

/// f(x, (a, b)) = a (1 - x^b) / b on beta in [-100, 100] x [0.1, 20], x in [0, 1].
RegressionModel paper_ratio_model();

/// Looks up a built-in model by id ("paper-ratio"). Throws InvalidArgument.
RegressionModel model_by_id(std::string_view id);
std::vector<std::string> builtin_model_ids();

double eval_f(const RegressionModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& beta);
Eigen::VectorXd eval_grad(const RegressionModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& beta);
Eigen::MatrixXd eval_hess(const RegressionModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& beta);

struct DerivativeReport {
  double grad_rel_error = 0.0;  ///< max |grad - FD(f)| / max(1, |grad|_inf)
  double hess_rel_error = 0.0;  ///< max |hess - FD(grad)| / max(1, |hess|_max)
  double hess_asymmetry = 0.0;  ///< max |H - H^T| / max(1, |H|_max)
};

/// Compares the model's derivatives with central differences of step
/// `step * (1 + |beta_j|)`. Never throws for finite inputs; the report
/// carries the numbers.
DerivativeReport check_derivatives(const RegressionModel& model, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& beta, double step);

}  // namespace tpel
