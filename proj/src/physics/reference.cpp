#include "bpinn/physics/reference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <sstream>

namespace bpinn::physics {

namespace {

using State = std::array<double, 2>;

State rhs(double mu, const State& y) { return {y[1], mu * (1.0 - y[0] * y[0]) * y[1] - y[0]}; }

State axpy(const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
  State out = y;
  for (const auto& [a, k] : terms) {
    out[0] += h * a * (*k)[0];
    out[1] += h * a * (*k)[1];
  }
  return out;
}

}  // namespace

DenseSolution::DenseSolution(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw std::invalid_argument("DenseSolution: need at least two nodes");
}

std::pair<double, double> DenseSolution::operator()(double t) const {
  const double span = t_end() - t_begin();
  const double slack = 1e-12 * std::max(1.0, std::abs(span));
  if (t < t_begin() - slack || t > t_end() + slack) {
    throw std::out_of_range("DenseSolution: t outside the integrated span");
  }
  t = std::clamp(t, t_begin(), t_end());
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t, [](double x, const Node& n) { return x < n.t; });
  if (it == nodes_.end()) --it;
  if (it == nodes_.begin()) ++it;
  const Node& a = *(it - 1);
  const Node& b = *it;
  const double h = b.t - a.t;
  const double s = (t - a.t) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  const double u = h00 * a.u + h10 * h * a.du + h01 * b.u + h11 * h * b.du;
  const double du = h00 * a.du + h10 * h * a.ddu + h01 * b.du + h11 * h * b.ddu;
  return {u, du};
}

DenseSolution solve_reference(const VdpProblem& problem, double tol) {
  SolverOptions o;
  o.tol = tol;
  return solve_reference(problem, o);
}

DenseSolution solve_reference(const VdpProblem& problem, const SolverOptions& opt) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("solve_reference: tol must be positive");
  if (!(problem.t1 > problem.t0)) throw std::invalid_argument("solve_reference: empty time span");
  const double mu = problem.mu;

  // Dormand-Prince tableau (autonomous system, so the c_i are not needed).
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // 5th minus 4th order weights
  constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                   e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

  double t = problem.t0;
  State y{problem.u0, problem.du0};
  State k1 = rhs(mu, y);
  std::vector<DenseSolution::Node> nodes{{t, y[0], y[1], k1[1]}};
  double h = std::min(opt.h_max, 1e-3 * (problem.t1 - problem.t0));

  for (std::size_t step = 0; t < problem.t1; ++step) {
    if (step >= opt.max_steps) throw StepSizeUnderflow("solve_reference: step budget exhausted");
    const bool last = t + h >= problem.t1;
    if (last) h = problem.t1 - t;
    const State k2 = rhs(mu, axpy(y, h, {{a21, &k1}}));
    const State k3 = rhs(mu, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
    const State k4 = rhs(mu, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const State k5 = rhs(mu, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const State k6 = rhs(mu, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    const State y5 = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const State k7 = rhs(mu, y5);
    double err = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      err = std::max(err, std::abs(e) / (opt.tol * (1.0 + std::max(std::abs(y[i]), std::abs(y5[i])))));
    }
    if (!std::isfinite(err)) err = 1e10;
    if (err <= 1.0) {
      t = last ? problem.t1 : t + h;
      y = y5;
      k1 = k7;  // first-same-as-last
      nodes.push_back({t, y[0], y[1], k1[1]});
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h = std::min(h * factor, opt.h_max);
    if (t < problem.t1 && h < opt.h_min) {
      std::ostringstream os;
      os << "solve_reference: step size underflow at t=" << t << " (mu=" << mu
         << "); the problem is too stiff for the explicit integrator at tol=" << opt.tol
         << ", shorten the span or relax the tolerance";
      throw StepSizeUnderflow(os.str());
    }
  }
  return DenseSolution(std::move(nodes));
}

}  // namespace bpinn::physics
