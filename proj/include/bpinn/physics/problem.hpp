#pragma once

// Van der Pol problem definition and its physics-informed loss terms.
//
//   u'' - mu (1 - u^2) u' + u = 0,  t in [0, 7],  u(0) = 2,  u'(0) = 0
//
// Every loss is a weighted sum of squared point residuals,
// L = sum_i w_i r_i(u(t_i), u'(t_i), u''(t_i))^2, which lets one evaluator
// serve all four constraints and their weighted total.

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bpinn/diffengine/jet.hpp"
#include "bpinn/model/architecture.hpp"

namespace bpinn::physics {

struct VdpProblem {
  double mu = 1.0;
  double t0 = 0.0;
  double t1 = 7.0;
  double u0 = 2.0;
  double du0 = 0.0;
  double bc_time = 7.0;
  double bc_value = 1.6978;

  void validate() const;
};

enum class Constraint { Data, Pde, Ic, Bc };

inline constexpr std::array<Constraint, 4> kConstraints{Constraint::Data, Constraint::Pde, Constraint::Ic,
                                                        Constraint::Bc};

std::string_view constraint_name(Constraint c);
Constraint parse_constraint(std::string_view name);

enum class ResidualKind {
  Value,      // u - target
  Slope,      // u' - target
  VanDerPol,  // u'' - mu (1 - u^2) u' + u
};

struct PointResidual {
  double t;
  ResidualKind kind;
  double target;
  double weight;  // w_i inside the unweighted constraint loss
  Constraint constraint;
  double scale = 1.0;  // loss weight lambda_c when merged into an objective
};

struct ResidualSet {
  std::vector<PointResidual> rows;
  double mu = 1.0;

  std::vector<double> times() const;
  bool empty() const { return rows.empty(); }
};

template <class T>
T vdp_residual(const ad::Jet2<T>& u, double mu) {
  return u.d2 - mu * ((1.0 - u.v * u.v) * u.d1) + u.v;
}

template <class T>
T point_residual(ResidualKind kind, const ad::Jet2<T>& u, double target, double mu) {
  switch (kind) {
    case ResidualKind::Value: return u.v - target;
    case ResidualKind::Slope: return u.d1 - target;
    case ResidualKind::VanDerPol: return vdp_residual(u, mu);
  }
  throw std::logic_error("point_residual: unknown kind");
}

/// Van der Pol residual of the network at t.
template <class T>
T residual(const model::Architecture& arch, std::span<const T> params, double t, double mu) {
  return vdp_residual(model::eval_with_input_jets(arch, params, t), mu);
}

/// sum_i w_i * scale_i * r_i^2, evaluated pointwise; T = double or ad::Var.
template <class T>
T residual_loss(const model::Architecture& arch, std::span<const T> params, const ResidualSet& set) {
  if (set.empty()) throw std::invalid_argument("residual_loss: empty residual set");
  T total{};
  bool first = true;
  for (const auto& row : set.rows) {
    const auto u = model::eval_with_input_jets(arch, params, row.t);
    const T r = point_residual(row.kind, u, row.target, set.mu);
    const T term = (row.weight * row.scale) * (r * r);
    total = first ? term : total + term;
    first = false;
  }
  return total;
}

struct Dataset;
struct CollocationGrid;

/// Mean over the dataset of (u(t_i) - u_i)^2.
ResidualSet data_residuals(const Dataset& data);
/// Mean over the grid of the squared Van der Pol residual.
ResidualSet pde_residuals(const VdpProblem& problem, const CollocationGrid& grid);
/// (u(0) - u0)^2 + (u'(0) - du0)^2.
ResidualSet ic_residuals(const VdpProblem& problem);
/// (u(bc_time) - bc_value)^2.
ResidualSet bc_residuals(const VdpProblem& problem);

ResidualSet constraint_residuals(Constraint c, const VdpProblem& problem, const Dataset& data,
                                 const CollocationGrid& grid);

/// Concatenation of the four constraint sets with rows scaled by lambda_c.
ResidualSet merge_weighted(std::span<const ResidualSet> sets, std::span<const double> lambdas);

template <class T>
T loss_data(const model::Architecture& arch, std::span<const T> params, const Dataset& data) {
  return residual_loss(arch, params, data_residuals(data));
}

template <class T>
T loss_pde(const model::Architecture& arch, std::span<const T> params, const VdpProblem& problem,
           const CollocationGrid& grid) {
  return residual_loss(arch, params, pde_residuals(problem, grid));
}

template <class T>
T loss_ic(const model::Architecture& arch, std::span<const T> params, const VdpProblem& problem) {
  return residual_loss(arch, params, ic_residuals(problem));
}

template <class T>
T loss_bc(const model::Architecture& arch, std::span<const T> params, const VdpProblem& problem) {
  return residual_loss(arch, params, bc_residuals(problem));
}

}  // namespace bpinn::physics
