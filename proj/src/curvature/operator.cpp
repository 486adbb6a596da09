#include "bpinn/curvature/operator.hpp"

#include <stdexcept>
#include <string>

#include "bpinn/model/network_ad.hpp"
#include "bpinn/physics/objective.hpp"

namespace bpinn::curvature {

std::string_view kind_name(OperatorKind kind) {
  return kind == OperatorKind::Exact ? "exact" : "gauss-newton";
}

OperatorKind parse_kind(std::string_view name) {
  if (name == "exact") return OperatorKind::Exact;
  if (name == "gauss-newton" || name == "gn") return OperatorKind::GaussNewton;
  throw std::invalid_argument("unknown operator kind '" + std::string(name) + "' (exact | gauss-newton)");
}

std::string_view term_name(Term term) {
  switch (term) {
    case Term::Data: return "data";
    case Term::Pde: return "pde";
    case Term::Ic: return "ic";
    case Term::Bc: return "bc";
    case Term::Prior: return "prior";
    case Term::Total: return "total";
  }
  return "?";
}

Term parse_term(std::string_view name) {
  for (Term t : {Term::Data, Term::Pde, Term::Ic, Term::Bc, Term::Prior, Term::Total}) {
    if (term_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown constraint '" + std::string(name) + "' (data | pde | ic | bc | prior | total)");
}

Term term_of(physics::Constraint c) { return static_cast<Term>(static_cast<int>(c)); }

CurvatureOperator::CurvatureOperator(LinearMap apply, Eigen::Index dim, OperatorKind kind, Term term,
                                     double tikhonov_eps)
    : apply_(std::move(apply)), dim_(dim), kind_(kind), term_(term), eps_(tikhonov_eps) {
  if (!(tikhonov_eps >= 0.0)) throw std::invalid_argument("CurvatureOperator: tikhonov_eps must be >= 0");
}

ParamVector CurvatureOperator::apply(const ParamVector& v) const {
  if (v.size() != dim_) throw std::invalid_argument("CurvatureOperator: vector length does not match P");
  return apply_(v);
}

ParamVector CurvatureOperator::apply_shifted(const ParamVector& v) const {
  ParamVector out = apply(v);
  if (eps_ != 0.0) out += eps_ * v;
  return out;
}

CurvatureOperator CurvatureOperator::with_eps(double eps) const {
  return CurvatureOperator(apply_, dim_, kind_, term_, eps);
}

struct FrozenModel::State {
  AnalysisInputs inputs;
  ParamVector theta;
  // Evaluators must outlive (and not move under) their frozen caches.
  std::array<std::unique_ptr<physics::LossEvaluator>, 4> evaluators;
  std::unique_ptr<physics::LossEvaluator> total_evaluator;
  std::array<physics::LossEvaluator::Frozen, 4> frozen;
  physics::LossEvaluator::Frozen total;
  ParamVector prior_hess;
};

FrozenModel::FrozenModel(AnalysisInputs inputs, ParamVector theta) {
  inputs.arch.validate();
  inputs.prior.validate();
  if (static_cast<std::size_t>(theta.size()) != inputs.arch.param_count()) {
    throw std::invalid_argument("FrozenModel: parameter vector does not match the architecture");
  }
  auto s = std::make_shared<State>();
  s->inputs = std::move(inputs);
  s->theta = std::move(theta);
  const auto& in = s->inputs;
  std::vector<physics::ResidualSet> sets;
  for (auto c : physics::kConstraints) sets.push_back(physics::constraint_residuals(c, in.problem, in.data, in.grid));
  for (std::size_t c = 0; c < 4; ++c) {
    s->evaluators[c] = std::make_unique<physics::LossEvaluator>(in.arch, sets[c]);
    s->frozen[c] = s->evaluators[c]->freeze_at(s->theta, true);
  }
  s->total_evaluator = std::make_unique<physics::LossEvaluator>(in.arch, physics::merge_weighted(sets, in.weights));
  s->total = s->total_evaluator->freeze_at(s->theta, true);
  s->prior_hess = in.prior_weight * in.prior.neg_log_hess_diag(s->theta);
  state_ = std::move(s);
}

const ParamVector& FrozenModel::params() const { return state_->theta; }
const AnalysisInputs& FrozenModel::inputs() const { return state_->inputs; }
Eigen::Index FrozenModel::dim() const { return state_->theta.size(); }

ParamVector FrozenModel::gradient(physics::Constraint c) const {
  return state_->frozen[static_cast<std::size_t>(c)].gradient();
}

double FrozenModel::loss(physics::Constraint c) const { return state_->frozen[static_cast<std::size_t>(c)].value(); }

CurvatureOperator make_constraint_operator(Term term, const FrozenModel& model, OperatorKind kind, double eps) {
  const auto state = model.state_;
  const bool gn = kind == OperatorKind::GaussNewton;
  LinearMap apply;
  switch (term) {
    case Term::Data:
    case Term::Pde:
    case Term::Ic:
    case Term::Bc: {
      const auto c = static_cast<std::size_t>(term);
      if (gn) {
        apply = [state, c](const ParamVector& v) { return state->frozen[c].gauss_newton_hvp(v); };
      } else {
        apply = [state, c](const ParamVector& v) { return state->frozen[c].hvp(v); };
      }
      break;
    }
    case Term::Prior: {
      ParamVector diag = gn ? ParamVector(state->prior_hess.cwiseMax(0.0)) : state->prior_hess;
      apply = [diag = std::move(diag)](const ParamVector& v) { return ParamVector(diag.cwiseProduct(v)); };
      break;
    }
    case Term::Total: {
      ParamVector diag = gn ? ParamVector(state->prior_hess.cwiseMax(0.0)) : state->prior_hess;
      if (gn) {
        apply = [state, diag](const ParamVector& v) {
          return ParamVector(state->total.gauss_newton_hvp(v) + diag.cwiseProduct(v));
        };
      } else {
        apply = [state, diag](const ParamVector& v) { return ParamVector(state->total.hvp(v) + diag.cwiseProduct(v)); };
      }
      break;
    }
    default:
      throw std::invalid_argument("make_constraint_operator: unknown constraint id");
  }
  return CurvatureOperator(std::move(apply), model.dim(), kind, term, eps);
}

ParamVector jacobian_output(const model::Architecture& arch, const ParamVector& theta, double x) {
  const double xs[] = {x};
  return model::output_jacobians(arch, theta, xs).row(0).transpose();
}

Eigen::MatrixXd jacobian_outputs(const model::Architecture& arch, const ParamVector& theta,
                                 std::span<const double> xs) {
  return model::output_jacobians(arch, theta, xs);
}

Eigen::MatrixXd dense_matrix(const CurvatureOperator& op) {
  const Eigen::Index n = op.dim();
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) H.col(i) = op.apply(ParamVector::Unit(n, i));
  return H;
}

}  // namespace bpinn::curvature
