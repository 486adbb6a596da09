#pragma once

#include <stdexcept>

#include "bpinn/curvature/lanczos.hpp"
#include "bpinn/curvature/operator.hpp"

namespace bpinn::curvature {

struct CgOptions {
  double tol = 1e-8;
  std::size_t max_iters = 2000;
};

struct CgResult {
  ParamVector x;
  std::size_t iterations = 0;
  /// ||A x - b|| / ||b||, recomputed from A x at exit.
  double relative_residual = 0.0;
  bool converged = false;
};

/// Raised when CG meets a direction with p^T A p <= 0.
class IndefiniteOperator : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conjugate gradients on A x = b for symmetric positive definite A.
/// Convergence is only declared once the recomputed residual meets tol;
/// a drifted recursive residual restarts the iteration from the true one.
CgResult cg_solve(const LinearMap& A, const ParamVector& b, const CgOptions& options);

/// Solves (H + eps I) z = rhs with eps = op.tikhonov_eps().
CgResult cg_solve(const CurvatureOperator& op, const ParamVector& rhs, const CgOptions& options);

struct SmallestOptions {
  /// Outer Lanczos iterations on the inverted operator.
  std::size_t max_iters = 12;
  double tol = 1e-4;
  CgOptions cg{1e-10, 300};
  std::uint64_t seed = 0;
};

struct SmallestMagnitude {
  double value = 0.0;
  std::size_t outer_iterations = 0;
  std::size_t inner_iterations = 0;
  bool converged = false;  // outer Ritz pair and every inner solve converged
};

/// Estimate of min |lambda(H)| by Lanczos on a shift-inverted operator with
/// CG inner solves: (H + s I)^-1 for positive semidefinite operators, whose
/// top eigenvalue is 1 / (lambda_min + s), and (H^2 + s^2 I)^-1 otherwise,
/// whose top eigenvalue is 1 / (lambda_min^2 + s^2). Requires shift > 0.
SmallestMagnitude estimate_min_abs_eigenvalue(const CurvatureOperator& op, double shift,
                                              const SmallestOptions& options);

/// kappa_hat = max|lambda| / max(min|lambda| estimate, eps).
double condition_number(double max_abs, double min_abs, double eps);

}  // namespace bpinn::curvature
