#include "tpel/errors.hpp"

namespace tpel {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParameterOutOfBounds: return "parameter-out-of-bounds";
    case ErrorKind::RegressorOutOfBounds: return "regressor-out-of-bounds";
    case ErrorKind::NumericOverflow: return "numeric-overflow";
    case ErrorKind::SingularMatrix: return "singular-matrix";
    case ErrorKind::NotPsd: return "not-psd";
    case ErrorKind::NoConvergence: return "no-convergence";
    case ErrorKind::InfeasibleStep: return "infeasible-step";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::FitFailure: return "fit-failure";
    case ErrorKind::InfeasibleLambda: return "infeasible-lambda";
    case ErrorKind::ConvexHull: return "convex-hull";
    case ErrorKind::InvalidProbability: return "invalid-probability";
    case ErrorKind::InvalidArgument: return "invalid-argument";
  }
  return "unknown";
}

}  // namespace tpel
