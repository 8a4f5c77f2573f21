#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace tpel {

enum class ErrorKind {
  ParameterOutOfBounds,
  RegressorOutOfBounds,
  NumericOverflow,
  SingularMatrix,
  NotPsd,
  NoConvergence,
  InfeasibleStep,
  InsufficientData,
  FitFailure,
  InfeasibleLambda,
  ConvexHull,
  InvalidProbability,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Base of every error raised by the library. The kind is what callers
// branch on (the Monte Carlo harness tallies failures by kind).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class SingularMatrixError : public Error {
 public:
  explicit SingularMatrixError(double condition)
      : Error(ErrorKind::SingularMatrix,
              "matrix is singular to working precision (condition estimate " +
                  std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class NotPsdError : public Error {
 public:
  explicit NotPsdError(double min_eigenvalue)
      : Error(ErrorKind::NotPsd, "matrix is not positive semi-definite (min eigenvalue " +
                                     std::to_string(min_eigenvalue) + ")"),
        min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& what, double last_residual)
      : Error(ErrorKind::NoConvergence, what + " (last residual " + std::to_string(last_residual) + ")"),
        last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

class FitFailureError : public Error {
 public:
  FitFailureError(const std::string& what, Eigen::VectorXd best)
      : Error(ErrorKind::FitFailure, what), best_(std::move(best)) {}
  const Eigen::VectorXd& best_iterate() const noexcept { return best_; }

 private:
  Eigen::VectorXd best_;
};

class ConvexHullError : public Error {
 public:
  ConvexHullError(const std::string& what, double last_residual)
      : Error(ErrorKind::ConvexHull, what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

}  // namespace tpel
