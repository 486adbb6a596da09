#pragma once

// Fast evaluation of a residual-set loss on the full network: value,
// gradient, exact Hessian-vector products and the Gauss-Newton surrogate.
//
// The network part runs layer-batched through model::NetworkBatch. The
// per-row outer function f_i(u, u', u'') = w_i s_i r_i^2 is differentiated
// on the scalar tape, so each residual form is written once (problem.hpp)
// and shared by the tape path and this one.

#include <array>
#include <memory>

#include <Eigen/Core>

#include "bpinn/model/network_ad.hpp"
#include "bpinn/physics/problem.hpp"

namespace bpinn::physics {

struct RowDerivatives {
  double residual = 0.0;
  double loss = 0.0;                 // w * scale * r^2
  Eigen::Vector3d residual_grad;     // dr / d(u, u', u'')
  Eigen::Vector3d loss_grad;         // df / d(u, u', u'')
  Eigen::Matrix3d loss_hess;         // d2f / d(u, u', u'')^2, only when requested
};

RowDerivatives row_derivatives(const PointResidual& row, double mu, const Eigen::Vector3d& jet, bool with_hessian);

class LossEvaluator {
 public:
  LossEvaluator(model::Architecture arch, ResidualSet set);

  struct Evaluation {
    double value = 0.0;
    ParamVector gradient;
    /// Unweighted sum_i w_i r_i^2 per constraint (scale omitted).
    std::array<double, 4> per_constraint{};
  };

  double value(const ParamVector& params) const;
  Evaluation evaluate(const ParamVector& params) const;
  ParamVector gradient(const ParamVector& params) const { return evaluate(params).gradient; }

  /// Curvature queries at a fixed parameter point. Holds the forward and
  /// reverse caches so each product costs one tangent sweep.
  class Frozen {
   public:
    ParamVector hvp(const ParamVector& v) const;
    ParamVector gauss_newton_hvp(const ParamVector& v) const;
    const ParamVector& gradient() const { return gradient_; }
    double value() const { return value_; }
    /// d r_i / d theta, one row per residual.
    const Eigen::MatrixXd& residual_jacobian() const { return jacobian_; }
    /// 2 w_i scale_i, so the Gauss-Newton matrix is J^T diag(gn_weights) J.
    const Eigen::VectorXd& gn_weights() const { return gn_weights_; }
    const Eigen::VectorXd& residuals() const { return residuals_; }

   private:
    friend class LossEvaluator;
    const LossEvaluator* owner_ = nullptr;
    ParamVector params_;
    model::NetworkBatch::Forward fwd_;
    model::NetworkBatch::Reverse rev_;
    std::vector<Eigen::Matrix3d> row_hess_;
    ParamVector gradient_;
    double value_ = 0.0;
    Eigen::MatrixXd jacobian_;
    Eigen::VectorXd gn_weights_;
    Eigen::VectorXd residuals_;
  };

  /// With `gauss_newton` the residual Jacobian is materialized (rows x P).
  Frozen freeze_at(const ParamVector& params, bool gauss_newton) const;

  const ResidualSet& residual_set() const { return set_; }
  const model::Architecture& architecture() const { return net_.architecture(); }
  std::size_t param_count() const { return net_.param_count(); }

 private:
  ResidualSet set_;
  model::NetworkBatch net_;
};

}  // namespace bpinn::physics
