#pragma once

// Symmetric curvature operators over the frozen network.
//
// The objective at the variational mean is
//   U(theta) = sum_c lambda_c L_c(theta) + prior_weight * (-log p(theta))
// so its Hessian splits as H_tot = sum_c lambda_c H_c + H_prior. Each
// operator applies one of these terms matrix-free, either exactly
// (Pearlmutter products) or through its Gauss-Newton surrogate.

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "bpinn/model/architecture.hpp"
#include "bpinn/model/variational.hpp"
#include "bpinn/physics/dataset.hpp"
#include "bpinn/physics/problem.hpp"

namespace bpinn::curvature {

enum class OperatorKind { Exact, GaussNewton };

std::string_view kind_name(OperatorKind kind);  // "exact" | "gauss-newton"
OperatorKind parse_kind(std::string_view name);

enum class Term { Data, Pde, Ic, Bc, Prior, Total };

std::string_view term_name(Term term);
Term parse_term(std::string_view name);
Term term_of(physics::Constraint c);

using LinearMap = std::function<ParamVector(const ParamVector&)>;

class CurvatureOperator {
 public:
  CurvatureOperator(LinearMap apply, Eigen::Index dim, OperatorKind kind, Term term, double tikhonov_eps = 0.0);

  /// H v
  ParamVector apply(const ParamVector& v) const;
  /// (H + eps I) v
  ParamVector apply_shifted(const ParamVector& v) const;

  Eigen::Index dim() const { return dim_; }
  OperatorKind kind() const { return kind_; }
  Term term() const { return term_; }
  double tikhonov_eps() const { return eps_; }
  /// Gauss-Newton operators are positive semidefinite by construction.
  bool psd() const { return kind_ == OperatorKind::GaussNewton; }

  CurvatureOperator with_eps(double eps) const;

 private:
  LinearMap apply_;
  Eigen::Index dim_;
  OperatorKind kind_;
  Term term_;
  double eps_;
};

/// Everything the loss terms depend on besides the parameters.
struct AnalysisInputs {
  model::Architecture arch;
  physics::VdpProblem problem;
  physics::Dataset data;
  physics::CollocationGrid grid;
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
  model::ScaleMixturePrior prior;
  double prior_weight = 1e-3;
};

/// Forward/reverse caches of every loss term at a fixed parameter vector.
/// Cheap to copy; copies share the caches. Safe for concurrent reads.
class FrozenModel {
 public:
  FrozenModel(AnalysisInputs inputs, ParamVector theta);

  const ParamVector& params() const;
  const AnalysisInputs& inputs() const;
  Eigen::Index dim() const;

  /// Gradient of the unweighted L_c at theta.
  ParamVector gradient(physics::Constraint c) const;
  /// Unweighted L_c at theta.
  double loss(physics::Constraint c) const;

 private:
  friend CurvatureOperator make_constraint_operator(Term, const FrozenModel&, OperatorKind, double);
  struct State;
  std::shared_ptr<const State> state_;
};

/// H_c for a loss term (unweighted by lambda_c), H_prior, or H_tot.
/// Gauss-Newton operators apply J^T diag(2 w_i) J for residual Jacobian
/// rows J_i and loss weights w_i, which is the exact Hessian whenever the
/// residuals are affine in theta. The Gauss-Newton prior keeps only the
/// non-negative part of the diagonal.
CurvatureOperator make_constraint_operator(Term term, const FrozenModel& model, OperatorKind kind, double eps = 0.0);

/// Gradient of the network output u(x) with respect to the parameters.
ParamVector jacobian_output(const model::Architecture& arch, const ParamVector& theta, double x);
/// One row per point, N x P.
Eigen::MatrixXd jacobian_outputs(const model::Architecture& arch, const ParamVector& theta,
                                 std::span<const double> xs);

/// Columns H e_i. Only sensible for small P.
Eigen::MatrixXd dense_matrix(const CurvatureOperator& op);

}  // namespace bpinn::curvature
