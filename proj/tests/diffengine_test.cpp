#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bpinn/diffengine/jet.hpp"
#include "bpinn/diffengine/tape.hpp"
#include "bpinn/model/architecture.hpp"
#include "bpinn/physics/dataset.hpp"
#include "bpinn/physics/problem.hpp"
#include "test_support.hpp"

namespace bpinn {
namespace {

using ad::Var;
using testing::fd_gradient;
using testing::fd_hvp;
using testing::random_vector;
using testing::rel_err;

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

std::function<double(const Eigen::VectorXd&)> as_double(const ad::TapeFunction& f) {
  return [f](const Eigen::VectorXd& x) { return ad::value(f, ad::as_span(x)); };
}

std::function<Eigen::VectorXd(const Eigen::VectorXd&)> as_grad(const ad::TapeFunction& f) {
  return [f](const Eigen::VectorXd& x) { return ad::grad(f, ad::as_span(x)); };
}

TEST(Grad, SquareAtThree) {
  const ad::TapeFunction f = [](std::span<const Var> x) { return square(x[0]); };
  const auto g = ad::grad(f, ad::as_span(vec({3.0})));
  EXPECT_DOUBLE_EQ(g[0], 6.0);
}

TEST(Grad, TanhAtZero) {
  const ad::TapeFunction f = [](std::span<const Var> x) { return tanh(x[0]); };
  EXPECT_DOUBLE_EQ(ad::grad(f, ad::as_span(vec({0.0})))[0], 1.0);
}

TEST(Grad, DataLossOfSingleUnitNetMatchesFiniteDifferences) {
  const auto arch = testing::tiny_arch(1);
  physics::Dataset data;
  data.points = {{0.5, 1.0}, {2.0, -0.3}, {4.0, 0.7}};
  std::mt19937_64 rng(7);
  const Eigen::VectorXd theta = random_vector(static_cast<Eigen::Index>(arch.param_count()), rng);
  const ad::TapeFunction loss = [&](std::span<const Var> p) { return physics::loss_data(arch, p, data); };
  const auto g = ad::grad(loss, ad::as_span(theta));
  const auto fd = fd_gradient(as_double(loss), theta, 1e-5);
  EXPECT_LT(rel_err(g, fd), 1e-6);
}

TEST(Hvp, QuadraticForm) {
  const ad::TapeFunction f = [](std::span<const Var> x) { return 0.5 * (2.0 * square(x[0]) + 5.0 * square(x[1])); };
  const auto hv = ad::hvp(f, ad::as_span(vec({0.3, -1.2})), ad::as_span(vec({1.0, 1.0})));
  EXPECT_NEAR(hv[0], 2.0, 1e-15);
  EXPECT_NEAR(hv[1], 5.0, 1e-15);
}

TEST(Hvp, CrossTerm) {
  const ad::TapeFunction f = [](std::span<const Var> x) { return x[0] * x[1]; };
  const auto hv = ad::hvp(f, ad::as_span(vec({2.0, 3.0})), ad::as_span(vec({1.0, 0.0})));
  EXPECT_EQ(hv[0], 0.0);
  EXPECT_EQ(hv[1], 1.0);
}

TEST(Hvp, TinyNetMatchesFiniteDifferenceOfGradient) {
  const auto arch = testing::tiny_arch(4);
  physics::VdpProblem problem;
  const auto grid = physics::uniform_grid(0.0, 7.0, 9);
  std::mt19937_64 rng(11);
  const Eigen::VectorXd theta = random_vector(static_cast<Eigen::Index>(arch.param_count()), rng, 0.5);
  const ad::TapeFunction loss = [&](std::span<const Var> p) { return physics::loss_pde(arch, p, problem, grid); };
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = random_vector(theta.size(), rng);
    const auto hv = ad::hvp(loss, ad::as_span(theta), ad::as_span(v));
    EXPECT_LT(rel_err(hv, fd_hvp(as_grad(loss), theta, v, 1e-4)), 1e-5);
  }
}

// Every primitive against central differences, value and curvature.
TEST(Primitives, FiniteDifferenceConformance) {
  const std::vector<std::pair<const char*, ad::TapeFunction>> cases = {
      {"add", [](std::span<const Var> x) { return square(x[0] + x[1]); }},
      {"mul", [](std::span<const Var> x) { return x[0] * x[1] * x[0]; }},
      {"neg", [](std::span<const Var> x) { return square(-x[0]) * x[1]; }},
      {"tanh", [](std::span<const Var> x) { return tanh(x[0] * x[1]); }},
      {"reciprocal", [](std::span<const Var> x) { return reciprocal(2.0 + square(x[0])) * x[1]; }},
      {"square", [](std::span<const Var> x) { return square(square(x[0]) - x[1]); }},
      {"exp", [](std::span<const Var> x) { return exp(0.5 * x[0]) * x[1]; }},
      {"log", [](std::span<const Var> x) { return log(1.5 + square(x[0])) * x[1]; }},
  };
  std::mt19937_64 rng(3);
  for (const auto& [name, f] : cases) {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd x = random_vector(2, rng);
      const Eigen::VectorXd v = random_vector(2, rng);
      EXPECT_LT(rel_err(ad::grad(f, ad::as_span(x)), fd_gradient(as_double(f), x, 1e-6), 1e-3), 1e-5) << name;
      EXPECT_LT(rel_err(ad::hvp(f, ad::as_span(x), ad::as_span(v)), fd_hvp(as_grad(f), x, v, 1e-5), 1e-3), 1e-5)
          << name;
    }
  }
}

TEST(Grad, CompositeMatchesFiniteDifferencesAtRandomPoints) {
  const auto arch = testing::tiny_arch(3, true);
  physics::VdpProblem problem;
  problem.mu = 2.0;
  const auto grid = physics::uniform_grid(0.0, 7.0, 5);
  const ad::TapeFunction loss = [&](std::span<const Var> p) {
    return physics::loss_pde(arch, p, problem, grid) + physics::loss_ic(arch, p, problem) +
           physics::loss_bc(arch, p, problem);
  };
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd x = random_vector(static_cast<Eigen::Index>(arch.param_count()), rng, 0.7);
    EXPECT_LT(rel_err(ad::grad(loss, ad::as_span(x)), fd_gradient(as_double(loss), x, 1e-6)), 1e-5);
  }
}

TEST(NonFinite, ErrorNamesTheNode) {
  const ad::TapeFunction f = [](std::span<const Var> x) { return log(x[0] - 5.0) * x[0]; };
  try {
    ad::grad(f, ad::as_span(vec({1.0})));
    FAIL() << "expected NonFiniteError";
  } catch (const ad::NonFiniteError& e) {
    EXPECT_EQ(e.op(), ad::Op::Log);
    const std::string what = e.what();
    EXPECT_NE(what.find("log"), std::string::npos);
    EXPECT_NE(what.find(std::to_string(e.node())), std::string::npos);
  }
}

TEST(Tape, ReplayIsBitIdentical) {
  const auto arch = testing::tiny_arch(5);
  std::mt19937_64 rng(9);
  const Eigen::VectorXd theta = random_vector(static_cast<Eigen::Index>(arch.param_count()), rng);
  auto record = [&] {
    ad::Tape tape;
    std::vector<Var> p;
    for (Eigen::Index i = 0; i < theta.size(); ++i) p.push_back(tape.variable(theta[i]));
    physics::residual(arch, std::span<const Var>(p), 1.3, 1.0);
    std::vector<double> values;
    for (std::size_t i = 0; i < tape.size(); ++i) values.push_back(tape.value(static_cast<std::uint32_t>(i)));
    return values;
  };
  EXPECT_EQ(record(), record());
}

class HvpProperties : public ::testing::Test {
 protected:
  void SetUp() override {
    theta = random_vector(static_cast<Eigen::Index>(arch.param_count()), rng, 0.5);
    loss = [this](std::span<const Var> p) {
      return physics::loss_pde(arch, p, problem, grid) + physics::loss_ic(arch, p, problem);
    };
  }

  model::Architecture arch = testing::tiny_arch(6, true);
  physics::VdpProblem problem;
  physics::CollocationGrid grid = physics::uniform_grid(0.0, 7.0, 7);
  std::mt19937_64 rng{21};
  Eigen::VectorXd theta;
  ad::TapeFunction loss;
};

TEST_F(HvpProperties, LinearInDirection) {
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v1 = random_vector(theta.size(), rng);
    const Eigen::VectorXd v2 = random_vector(theta.size(), rng);
    const double a = 0.7, b = -1.3;
    const Eigen::VectorXd combined = a * v1 + b * v2;
    const auto lhs = ad::hvp(loss, ad::as_span(theta), ad::as_span(combined));
    const auto rhs = a * ad::hvp(loss, ad::as_span(theta), ad::as_span(v1)) +
                     b * ad::hvp(loss, ad::as_span(theta), ad::as_span(v2));
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  }
}

TEST_F(HvpProperties, Symmetric) {
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = random_vector(theta.size(), rng);
    const Eigen::VectorXd w = random_vector(theta.size(), rng);
    const double vhw = v.dot(ad::hvp(loss, ad::as_span(theta), ad::as_span(w)));
    const double whv = w.dot(ad::hvp(loss, ad::as_span(theta), ad::as_span(v)));
    EXPECT_LT(std::abs(vhw - whv), 1e-10 * std::max(std::abs(vhw), 1.0));
  }
}

TEST(Jet2, ConstantNet) {
  model::Architecture arch = testing::tiny_arch(2);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()));
  p[p.size() - 1] = 1.75;
  const auto j = model::eval_with_input_jets<double>(arch, ad::as_span(p), 3.0);
  EXPECT_EQ(j.v, 1.75);
  EXPECT_EQ(j.d1, 0.0);
  EXPECT_EQ(j.d2, 0.0);
}

TEST(Jet2, LinearUnit) {
  model::Architecture arch;
  arch.hidden_layers = 0;
  arch.normalize_input = false;
  const Eigen::VectorXd p = vec({2.5, 0.0});
  const auto j = model::eval_with_input_jets<double>(arch, ad::as_span(p), 1.2);
  EXPECT_DOUBLE_EQ(j.v, 3.0);
  EXPECT_DOUBLE_EQ(j.d1, 2.5);
  EXPECT_EQ(j.d2, 0.0);
}

TEST(Jet2, TanhPassthroughAtZero) {
  const auto arch = testing::tiny_arch(1);
  const Eigen::VectorXd p = vec({1.0, 0.0, 1.0, 0.0});
  const auto j = model::eval_with_input_jets<double>(arch, ad::as_span(p), 0.0);
  EXPECT_EQ(j.v, 0.0);
  EXPECT_EQ(j.d1, 1.0);
  EXPECT_EQ(j.d2, 0.0);
}

TEST(Jet2, MatchesSecondOrderStencil) {
  model::Architecture arch;
  arch.hidden_layers = 2;
  arch.hidden_width = 6;
  std::mt19937_64 rng(17);
  const Eigen::VectorXd p = random_vector(static_cast<Eigen::Index>(arch.param_count()), rng, 0.8);
  const double h = 1e-3;
  for (double t : {0.4, 2.2, 5.1, 6.8}) {
    auto u = [&](double s) { return model::forward(arch, p, s); };
    const auto j = model::eval_with_input_jets<double>(arch, ad::as_span(p), t);
    EXPECT_LT(rel_err(j.d1, (u(t + h) - u(t - h)) / (2 * h)), 1e-4);
    EXPECT_LT(rel_err(j.d2, (u(t + h) - 2 * u(t) + u(t - h)) / (h * h)), 1e-4);
  }
}

TEST(Jet2, ProductRule) {
  const ad::Jet2<double> a{2.0, 3.0, 5.0};
  const ad::Jet2<double> b{-1.0, 0.5, 4.0};
  const auto c = a * b;
  EXPECT_EQ(c.v, -2.0);
  EXPECT_EQ(c.d1, 3.0 * -1.0 + 2.0 * 0.5);
  EXPECT_EQ(c.d2, 5.0 * -1.0 + 2.0 * 3.0 * 0.5 + 2.0 * 4.0);
}

}  // namespace
}  // namespace bpinn
