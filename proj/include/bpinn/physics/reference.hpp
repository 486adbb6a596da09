#pragma once

// Adaptive Dormand-Prince 5(4) integration of the first-order Van der Pol
// system y = (u, u'), with cubic Hermite dense output between accepted steps.

#include <stdexcept>
#include <vector>

#include "bpinn/physics/problem.hpp"

namespace bpinn::physics {

class StepSizeUnderflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  double tol = 1e-10;
  double h_min = 1e-12;
  // Caps the step so the cubic Hermite interpolant stays well below tol.
  double h_max = 0.02;
  std::size_t max_steps = 1'000'000;
};

class DenseSolution {
 public:
  struct Node {
    double t;
    double u;
    double du;
    double ddu;
  };

  explicit DenseSolution(std::vector<Node> nodes);

  /// (u, du/dt) at t; throws outside the integrated span.
  std::pair<double, double> operator()(double t) const;
  double u(double t) const { return (*this)(t).first; }

  double t_begin() const { return nodes_.front().t; }
  double t_end() const { return nodes_.back().t; }
  std::size_t steps() const { return nodes_.size() - 1; }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

/// Each accepted step satisfies the mixed error test
/// |err_i| <= tol * (1 + |y_i|).
DenseSolution solve_reference(const VdpProblem& problem, double tol);
DenseSolution solve_reference(const VdpProblem& problem, const SolverOptions& options);

}  // namespace bpinn::physics
