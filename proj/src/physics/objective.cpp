#include "bpinn/physics/objective.hpp"

#include <cmath>
#include <sstream>

namespace bpinn::physics {

namespace {

constexpr std::size_t index_of(Constraint c) { return static_cast<std::size_t>(c); }

// f(u, u', u'') on a reused tape, leaf tangents set to `dir`.
struct RowTape {
  ad::Tape tape;

  ad::Tape::Adjoints run(const PointResidual& row, double mu, const Eigen::Vector3d& jet,
                         const Eigen::Vector3d& dir, bool squared, double* out_value) {
    tape.clear();
    const ad::Var u = tape.variable(jet[0], dir[0]);
    const ad::Var du = tape.variable(jet[1], dir[1]);
    const ad::Var ddu = tape.variable(jet[2], dir[2]);
    const ad::Var r = point_residual(row.kind, ad::Jet2<ad::Var>{u, du, ddu}, row.target, mu);
    const ad::Var f = squared ? (row.weight * row.scale) * square(r) : r;
    *out_value = f.value();
    return tape.reverse(f);
  }
};

thread_local RowTape row_tape;

}  // namespace

RowDerivatives row_derivatives(const PointResidual& row, double mu, const Eigen::Vector3d& jet, bool with_hessian) {
  RowDerivatives d;
  const Eigen::Vector3d zero = Eigen::Vector3d::Zero();
  {
    const auto adj = row_tape.run(row, mu, jet, zero, false, &d.residual);
    d.residual_grad = Eigen::Vector3d(adj.adjoint[0], adj.adjoint[1], adj.adjoint[2]);
  }
  {
    const auto adj = row_tape.run(row, mu, jet, zero, true, &d.loss);
    d.loss_grad = Eigen::Vector3d(adj.adjoint[0], adj.adjoint[1], adj.adjoint[2]);
  }
  if (with_hessian) {
    for (int k = 0; k < 3; ++k) {
      double unused = 0.0;
      const auto adj = row_tape.run(row, mu, jet, Eigen::Vector3d::Unit(k), true, &unused);
      d.loss_hess.col(k) = Eigen::Vector3d(adj.adjoint_tangent[0], adj.adjoint_tangent[1], adj.adjoint_tangent[2]);
    }
  } else {
    d.loss_hess.setZero();
  }
  if (!std::isfinite(d.loss)) {
    std::ostringstream os;
    os << "non-finite " << constraint_name(row.constraint) << " residual at t=" << row.t;
    throw std::runtime_error(os.str());
  }
  return d;
}

LossEvaluator::LossEvaluator(model::Architecture arch, ResidualSet set)
    : set_(std::move(set)), net_(arch, set_.times()) {}

double LossEvaluator::value(const ParamVector& params) const {
  const auto fwd = net_.forward(params);
  double v = 0.0;
  for (std::size_t i = 0; i < set_.rows.size(); ++i) {
    const auto& row = set_.rows[i];
    const auto jet = fwd.out.col(static_cast<Eigen::Index>(i));
    const ad::Jet2<double> u{jet[0], jet[1], jet[2]};
    const double r = point_residual(row.kind, u, row.target, set_.mu);
    v += row.weight * row.scale * r * r;
  }
  return v;
}

LossEvaluator::Evaluation LossEvaluator::evaluate(const ParamVector& params) const {
  const auto fwd = net_.forward(params);
  const auto n = static_cast<Eigen::Index>(set_.rows.size());
  model::JetBatch seeds(3, n);
  Evaluation e;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = set_.rows[static_cast<std::size_t>(i)];
    const auto d = row_derivatives(row, set_.mu, fwd.out.col(i), false);
    seeds.col(i) = d.loss_grad;
    e.value += d.loss;
    e.per_constraint[index_of(row.constraint)] += row.weight * d.residual * d.residual;
  }
  e.gradient = net_.gradient(fwd, net_.reverse(fwd, params, seeds));
  return e;
}

LossEvaluator::Frozen LossEvaluator::freeze_at(const ParamVector& params, bool gauss_newton) const {
  Frozen f;
  f.owner_ = this;
  f.params_ = params;
  f.fwd_ = net_.forward(params);
  const auto n = static_cast<Eigen::Index>(set_.rows.size());
  model::JetBatch seeds(3, n);
  model::JetBatch residual_seeds(3, n);
  f.row_hess_.resize(set_.rows.size());
  f.residuals_.resize(n);
  f.gn_weights_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = set_.rows[static_cast<std::size_t>(i)];
    const auto d = row_derivatives(row, set_.mu, f.fwd_.out.col(i), true);
    seeds.col(i) = d.loss_grad;
    residual_seeds.col(i) = d.residual_grad;
    f.row_hess_[static_cast<std::size_t>(i)] = d.loss_hess;
    f.value_ += d.loss;
    f.residuals_[i] = d.residual;
    f.gn_weights_[i] = 2.0 * row.weight * row.scale;
  }
  f.rev_ = net_.reverse(f.fwd_, params, seeds);
  f.gradient_ = net_.gradient(f.fwd_, f.rev_);
  if (gauss_newton) {
    f.jacobian_ = net_.per_point_gradients(f.fwd_, net_.reverse(f.fwd_, params, residual_seeds));
  }
  return f;
}

ParamVector LossEvaluator::Frozen::hvp(const ParamVector& v) const {
  const auto& net = owner_->net_;
  const auto tan = net.tangent(fwd_, params_, v);
  model::JetBatch seed_tangents(3, tan.out.cols());
  for (Eigen::Index i = 0; i < tan.out.cols(); ++i) {
    seed_tangents.col(i) = row_hess_[static_cast<std::size_t>(i)] * tan.out.col(i);
  }
  return net.tangent_backward(fwd_, rev_, tan, params_, v, seed_tangents);
}

ParamVector LossEvaluator::Frozen::gauss_newton_hvp(const ParamVector& v) const {
  if (jacobian_.size() == 0) throw std::logic_error("gauss_newton_hvp: frozen without the residual Jacobian");
  const Eigen::VectorXd jv = jacobian_ * v;
  return jacobian_.transpose() * gn_weights_.cwiseProduct(jv);
}

}  // namespace bpinn::physics
