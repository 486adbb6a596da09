#pragma once

#include <span>
#include <stdexcept>

#include <Eigen/Core>

#include "bpinn/curvature/cg.hpp"

namespace bpinn::metrics {

struct VarianceOptions {
  curvature::CgOptions cg{1e-8, 2000};
  /// Solve along the right singular vectors of the stacked Jacobian instead
  /// of once per grid point. Same quantity, since
  ///   sum_x J_x^T A^-1 J_x = sum_i s_i^2 v_i^T A^-1 v_i
  /// for J = U S V^T; directions with s_i^2 <= rank_tol * s_max^2 are dropped.
  bool compress = true;
  double rank_tol = 1e-14;
  std::size_t workers = 1;
};

struct VarianceResult {
  double value = 0.0;
  std::size_t solves = 0;
  std::size_t cg_iterations = 0;
  double max_relative_residual = 0.0;
  /// False when some solve hit the iteration cap before reaching tol.
  bool converged = true;
};

/// A solve failed outright (indefinite operator or non-finite values).
class VarianceSolveError : public std::runtime_error {
 public:
  VarianceSolveError(const std::string& what, double x, bool indefinite)
      : std::runtime_error(what), x_(x), indefinite_(indefinite) {}
  /// Grid point of the failed solve; for compressed solves, the point with
  /// the largest weight in the failing singular direction.
  double x() const { return x_; }
  bool indefinite() const { return indefinite_; }

 private:
  double x_;
  bool indefinite_;
};

/// (1/N) sum_x J_x^T (H + eps I)^-1 J_x with eps = op.tikhonov_eps() and
/// J_x the rows of `jacobian` (N x P) evaluated at `xs`.
VarianceResult variance_attribution(const curvature::CurvatureOperator& op, const Eigen::MatrixXd& jacobian,
                                    std::span<const double> xs, const VarianceOptions& options);

}  // namespace bpinn::metrics
