#include "bpinn/physics/problem.hpp"

#include "bpinn/physics/dataset.hpp"

namespace bpinn::physics {

void VdpProblem::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("problem: mu must be positive");
  if (!(t1 > t0)) throw std::invalid_argument("problem: t_span must be ordered");
  if (bc_time < t0 || bc_time > t1) throw std::invalid_argument("problem: bc_time outside t_span");
}

std::string_view constraint_name(Constraint c) {
  switch (c) {
    case Constraint::Data: return "data";
    case Constraint::Pde: return "pde";
    case Constraint::Ic: return "ic";
    case Constraint::Bc: return "bc";
  }
  return "unknown";
}

Constraint parse_constraint(std::string_view name) {
  for (Constraint c : kConstraints) {
    if (constraint_name(c) == name) return c;
  }
  throw std::invalid_argument("unknown constraint '" + std::string(name) + "'");
}

std::vector<double> ResidualSet::times() const {
  std::vector<double> t;
  t.reserve(rows.size());
  for (const auto& r : rows) t.push_back(r.t);
  return t;
}

ResidualSet data_residuals(const Dataset& data) {
  if (data.points.empty()) throw std::invalid_argument("data loss: empty dataset");
  ResidualSet s;
  const double w = 1.0 / static_cast<double>(data.points.size());
  for (const auto& p : data.points) s.rows.push_back({p.t, ResidualKind::Value, p.u, w, Constraint::Data});
  return s;
}

ResidualSet pde_residuals(const VdpProblem& problem, const CollocationGrid& grid) {
  if (grid.times.empty()) throw std::invalid_argument("pde loss: empty collocation grid");
  ResidualSet s;
  s.mu = problem.mu;
  const double w = 1.0 / static_cast<double>(grid.times.size());
  for (double t : grid.times) s.rows.push_back({t, ResidualKind::VanDerPol, 0.0, w, Constraint::Pde});
  return s;
}

ResidualSet ic_residuals(const VdpProblem& problem) {
  ResidualSet s;
  s.mu = problem.mu;
  s.rows.push_back({problem.t0, ResidualKind::Value, problem.u0, 1.0, Constraint::Ic});
  s.rows.push_back({problem.t0, ResidualKind::Slope, problem.du0, 1.0, Constraint::Ic});
  return s;
}

ResidualSet bc_residuals(const VdpProblem& problem) {
  ResidualSet s;
  s.mu = problem.mu;
  s.rows.push_back({problem.bc_time, ResidualKind::Value, problem.bc_value, 1.0, Constraint::Bc});
  return s;
}

ResidualSet constraint_residuals(Constraint c, const VdpProblem& problem, const Dataset& data,
                                 const CollocationGrid& grid) {
  ResidualSet s;
  switch (c) {
    case Constraint::Data: s = data_residuals(data); break;
    case Constraint::Pde: s = pde_residuals(problem, grid); break;
    case Constraint::Ic: s = ic_residuals(problem); break;
    case Constraint::Bc: s = bc_residuals(problem); break;
  }
  s.mu = problem.mu;
  return s;
}

ResidualSet merge_weighted(std::span<const ResidualSet> sets, std::span<const double> lambdas) {
  if (sets.size() != lambdas.size()) throw std::invalid_argument("merge_weighted: size mismatch");
  ResidualSet out;
  if (!sets.empty()) out.mu = sets.front().mu;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (auto r : sets[i].rows) {
      // only Van der Pol rows read mu
      if (r.kind == ResidualKind::VanDerPol) out.mu = sets[i].mu;
      r.scale *= lambdas[i];
      out.rows.push_back(r);
    }
  }
  return out;
}

}  // namespace bpinn::physics
