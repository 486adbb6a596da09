#include <cmath>
#include <bit>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "bpinn/model/architecture.hpp"
#include "bpinn/model/checkpoint.hpp"
#include "bpinn/model/network_ad.hpp"
#include "bpinn/model/variational.hpp"
#include "test_support.hpp"

namespace bpinn {
namespace {

using ad::Var;
using testing::random_vector;
using testing::rel_err;

model::Architecture two_layer_arch() {
  model::Architecture arch;
  arch.hidden_layers = 2;
  arch.hidden_width = 5;
  arch.normalize_input = true;
  return arch;
}

Eigen::VectorXd random_params(const model::Architecture& arch, std::uint64_t seed, double scale = 0.8) {
  std::mt19937_64 rng(seed);
  return random_vector(static_cast<Eigen::Index>(arch.param_count()), rng, scale);
}

TEST(Architecture, DefaultParamCount) {
  const model::Architecture arch;
  EXPECT_EQ(arch.param_count(), 5251u);
  EXPECT_EQ(arch.widths(), (std::vector<int>{1, 50, 50, 50, 1}));
}

TEST(Architecture, ZeroParametersGiveZero) {
  const model::Architecture arch;
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()));
  for (double t : {0.0, 1.0, 7.0}) EXPECT_EQ(model::forward(arch, p, t), 0.0);
}

TEST(Architecture, IdentityPathAtOrigin) {
  const auto arch = testing::tiny_arch(3);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()));
  const auto slices = model::layer_slices(arch);
  p[static_cast<Eigen::Index>(slices[0].weight_offset)] = 1.0;
  p[static_cast<Eigen::Index>(slices[1].weight_offset)] = 1.0;
  EXPECT_EQ(model::forward(arch, p, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(model::forward(arch, p, 0.5), std::tanh(0.5));
}

TEST(Architecture, MatchesPlainLoopReference) {
  const model::Architecture arch;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Eigen::VectorXd p = random_params(arch, seed, 0.3);
    for (double t : {0.0, 1.0, 3.3, 7.0}) {
      const double ref = testing::reference_forward(arch, p, t);
      EXPECT_NEAR(model::forward(arch, p, t), ref, 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(Architecture, OutputBoundedByLastLayer) {
  const model::Architecture arch;
  const Eigen::VectorXd p = random_params(arch, 4, 2.0);
  const auto last = model::layer_slices(arch).back();
  double bound = std::abs(p[static_cast<Eigen::Index>(last.bias_offset)]);
  for (int j = 0; j < last.in; ++j) bound += std::abs(p[static_cast<Eigen::Index>(last.weight_offset) + j]);
  for (int i = 0; i <= 70; ++i) EXPECT_LE(std::abs(model::forward(arch, p, 0.1 * i)), bound);
}

TEST(Architecture, RejectsWrongParameterLength) {
  const auto arch = testing::tiny_arch(2);
  EXPECT_THROW(model::forward(arch, Eigen::VectorXd::Zero(3), 0.0), std::invalid_argument);
}

// The batched kernel against the scalar tape on the same functional
// F = sum_n sum_c seeds(c, n) * jet_c(t_n).
class BatchVersusTape : public ::testing::Test {
 protected:
  void SetUp() override {
    params = random_params(arch, 31);
    std::mt19937_64 rng(32);
    seeds = model::JetBatch::Zero(3, static_cast<Eigen::Index>(times.size()));
    for (Eigen::Index n = 0; n < seeds.cols(); ++n) seeds.col(n) = random_vector(3, rng);
    dir = random_vector(params.size(), rng);
  }

  ad::TapeFunction functional() const {
    return [this](std::span<const Var> p) {
      Var total = p[0] * 0.0;
      for (std::size_t n = 0; n < times.size(); ++n) {
        const auto j = model::eval_with_input_jets(arch, p, times[n]);
        const auto col = static_cast<Eigen::Index>(n);
        total = total + seeds(0, col) * j.v + seeds(1, col) * j.d1 + seeds(2, col) * j.d2;
      }
      return total;
    };
  }

  model::Architecture arch = two_layer_arch();
  std::vector<double> times{0.0, 0.7, 2.5, 4.0, 6.9};
  model::NetworkBatch net{arch, times};
  Eigen::VectorXd params;
  model::JetBatch seeds;
  Eigen::VectorXd dir;
};

TEST_F(BatchVersusTape, ForwardJets) {
  const auto fwd = net.forward(params);
  for (std::size_t n = 0; n < times.size(); ++n) {
    const auto j = model::eval_with_input_jets<double>(arch, ad::as_span(params), times[n]);
    const auto col = fwd.out.col(static_cast<Eigen::Index>(n));
    EXPECT_NEAR(col[0], j.v, 1e-13);
    EXPECT_NEAR(col[1], j.d1, 1e-13);
    EXPECT_NEAR(col[2], j.d2, 1e-13);
  }
}

TEST_F(BatchVersusTape, Gradient) {
  const auto fwd = net.forward(params);
  const auto g = net.gradient(fwd, net.reverse(fwd, params, seeds));
  EXPECT_LT(rel_err(g, ad::grad(functional(), ad::as_span(params))), 1e-12);
}

TEST_F(BatchVersusTape, TangentMatchesFiniteDifferences) {
  const auto fwd = net.forward(params);
  const auto tan = net.tangent(fwd, params, dir);
  const double h = 1e-6;
  const auto plus = net.forward(params + h * dir).out;
  const auto minus = net.forward(params - h * dir).out;
  const model::JetBatch fd = (plus - minus) / (2 * h);
  EXPECT_LT((tan.out - fd).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
}

TEST_F(BatchVersusTape, HessianVectorProductOfFixedSeeds) {
  const auto fwd = net.forward(params);
  const auto rev = net.reverse(fwd, params, seeds);
  const auto tan = net.tangent(fwd, params, dir);
  const model::JetBatch still = model::JetBatch::Zero(3, seeds.cols());
  const auto hv = net.tangent_backward(fwd, rev, tan, params, dir, still);
  const auto ref = ad::hvp(functional(), ad::as_span(params), ad::as_span(dir));
  EXPECT_LT(rel_err(hv, ref), 1e-11);
}

TEST_F(BatchVersusTape, PerPointGradients) {
  const auto fwd = net.forward(params);
  const auto rows = net.per_point_gradients(fwd, net.reverse(fwd, params, seeds));
  ASSERT_EQ(rows.rows(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t n = 0; n < times.size(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    const ad::TapeFunction fn = [&](std::span<const Var> p) {
      const auto j = model::eval_with_input_jets(arch, p, times[n]);
      return seeds(0, col) * j.v + seeds(1, col) * j.d1 + seeds(2, col) * j.d2;
    };
    EXPECT_LT(rel_err(Eigen::VectorXd(rows.row(col).transpose()), ad::grad(fn, ad::as_span(params))), 1e-12);
  }
}

TEST(OutputJacobian, ZeroNetOnlyOutputBias) {
  const auto arch = two_layer_arch();
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.param_count()));
  const std::vector<double> ts{0.0, 3.5, 7.0};
  const auto J = model::output_jacobians(arch, p, ts);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, p.size());
  expected.col(p.size() - 1).setOnes();
  EXPECT_EQ(J, expected);
}

TEST(OutputJacobian, ScalesWithOutputLayer) {
  const auto arch = two_layer_arch();
  Eigen::VectorXd p = random_params(arch, 41);
  const std::vector<double> ts{1.0, 5.0};
  const auto J1 = model::output_jacobians(arch, p, ts);
  const auto last = model::layer_slices(arch).back();
  for (int j = 0; j < last.in; ++j) p[static_cast<Eigen::Index>(last.weight_offset) + j] *= 2.0;
  const auto J2 = model::output_jacobians(arch, p, ts);
  const auto pre = static_cast<Eigen::Index>(last.weight_offset);
  EXPECT_LT((J2.leftCols(pre) - 2.0 * J1.leftCols(pre)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(OutputJacobian, MatchesFiniteDifferences) {
  const auto arch = two_layer_arch();
  for (std::uint64_t seed = 50; seed < 55; ++seed) {
    const Eigen::VectorXd p = random_params(arch, seed);
    const std::vector<double> ts{2.0};
    const Eigen::VectorXd J = model::output_jacobians(arch, p, ts).row(0).transpose();
    const auto fd = testing::fd_gradient([&](const Eigen::VectorXd& x) { return model::forward(arch, x, 2.0); }, p,
                                         1e-6);
    EXPECT_LT(rel_err(J, fd), 1e-6);
  }
}

TEST(Variational, InitializationFollowsXavierWithZeroBias) {
  const model::Architecture arch;
  model::Rng rng(1);
  const auto vp = model::initialize(arch, 0.05, rng);
  ASSERT_EQ(vp.size(), arch.param_count());
  for (const auto& L : model::layer_slices(arch)) {
    const double b = std::sqrt(6.0 / (L.in + L.out));
    for (int k = 0; k < L.in * L.out; ++k) EXPECT_LE(std::abs(vp.mu[static_cast<Eigen::Index>(L.weight_offset) + k]), b);
    for (int k = 0; k < L.out; ++k) EXPECT_EQ(vp.mu[static_cast<Eigen::Index>(L.bias_offset) + k], 0.0);
  }
  EXPECT_LT((vp.sigma().array() - 0.05).abs().maxCoeff(), 1e-15);
}

TEST(Variational, VanishingSigmaSamplesTheMean) {
  model::VariationalParams vp;
  vp.mu = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  vp.rho = Eigen::VectorXd::Constant(6, -60.0);
  model::Rng rng(2);
  EXPECT_LT((model::sample_params(vp, rng) - vp.mu).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(vp.freeze(), vp.mu);
}

TEST(Variational, FixedNoiseIsExact) {
  model::VariationalParams vp;
  vp.mu = Eigen::Vector3d(0.1, -0.2, 0.3);
  vp.rho = Eigen::Vector3d(-1.0, 0.0, 2.0);
  const Eigen::Vector3d eps(1.0, -2.0, 0.5);
  const auto s = model::sample_params(vp, eps);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s[i], vp.mu[i] + std::log1p(std::exp(vp.rho[i])) * eps[i]);
}

TEST(Variational, MonteCarloMoments) {
  model::VariationalParams vp;
  vp.mu = Eigen::Vector2d(0.5, -1.5);
  vp.rho = Eigen::Vector2d(model::inverse_softplus(0.3), model::inverse_softplus(1.2));
  model::Rng rng(3);
  const int n = 20000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Vector2d sq = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd s = model::sample_params(vp, rng) - vp.mu;
    sum += s;
    sq += s.cwiseAbs2();
  }
  const Eigen::VectorXd sigma = vp.sigma();
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(sum[i] / n), 4.0 * sigma[i] / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(sq[i] / n), sigma[i], 0.03 * sigma[i]);
  }
}

TEST(Variational, SoftplusInverse) {
  for (double y : {1e-8, 0.01, 0.5, 3.0, 40.0}) EXPECT_LT(rel_err(model::softplus(model::inverse_softplus(y)), y), 1e-12);
  EXPECT_DOUBLE_EQ(model::sigmoid(0.0), 0.5);
}

TEST(Prior, EqualScalesCollapseToOneGaussian) {
  for (double pi : {0.0, 0.2, 0.5, 1.0}) {
    const model::ScaleMixturePrior prior{0.3, 0.3, pi};
    for (double w : {-1.0, 0.0, 0.4}) {
      EXPECT_NEAR(prior.log_density(w), model::gaussian_log_density(w, 0.0, 0.3), 1e-13);
    }
  }
}

TEST(Prior, MixtureDensity) {
  const model::ScaleMixturePrior prior{1.0, 0.05, 0.25};
  for (double w : {-0.3, 0.0, 0.02, 2.0}) {
    const double p = 0.25 * std::exp(model::gaussian_log_density(w, 0, 1.0)) +
                     0.75 * std::exp(model::gaussian_log_density(w, 0, 0.05));
    EXPECT_NEAR(prior.log_density(w), std::log(p), 1e-12);
  }
  // far in the tails the narrow component underflows but the log density must not
  EXPECT_TRUE(std::isfinite(prior.log_density(200.0)));
}

TEST(Prior, DerivativesMatchFiniteDifferences) {
  const model::ScaleMixturePrior prior{1.0, 0.05, 0.25};
  const double h = 1e-5;
  for (double w : {-0.3, -0.04, 0.0, 0.07, 1.5}) {
    auto f = [&](double x) { return -prior.log_density(x); };
    EXPECT_NEAR(prior.neg_log_grad(w), (f(w + h) - f(w - h)) / (2 * h), 1e-5 * std::max(1.0, std::abs(prior.neg_log_grad(w))));
    auto g = [&](double x) { return prior.neg_log_grad(x); };
    EXPECT_NEAR(prior.neg_log_hess(w), (g(w + h) - g(w - h)) / (2 * h), 1e-4 * std::max(1.0, std::abs(prior.neg_log_hess(w))));
  }
}

TEST(Prior, RejectsBadParameters) {
  EXPECT_THROW((model::ScaleMixturePrior{0.0, 0.1, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((model::ScaleMixturePrior{0.1, 0.1, 1.5}.validate()), std::invalid_argument);
}

TEST(Kl, PosteriorEqualToPriorIsZero) {
  model::VariationalParams vp;
  vp.mu = Eigen::VectorXd::Zero(4);
  vp.rho = Eigen::VectorXd::Constant(4, model::inverse_softplus(0.1));
  const model::ScaleMixturePrior prior{0.1, 0.1, 0.5};
  model::Rng rng(5);
  std::vector<ParamVector> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(model::sample_params(vp, rng));
  EXPECT_NEAR(model::kl_penalty(vp, prior, samples), 0.0, 1e-10);
}

TEST(Kl, MonteCarloMatchesClosedFormGaussian) {
  model::VariationalParams vp;
  vp.mu = Eigen::Vector2d(0.2, -0.1);
  vp.rho = Eigen::Vector2d(model::inverse_softplus(0.05), model::inverse_softplus(0.2));
  const double s0 = 0.1;
  const model::ScaleMixturePrior prior{s0, s0, 0.5};
  double exact = 0.0;
  const Eigen::VectorXd s = vp.sigma();
  for (int i = 0; i < 2; ++i) {
    exact += std::log(s0 / s[i]) + (s[i] * s[i] + vp.mu[i] * vp.mu[i]) / (2 * s0 * s0) - 0.5;
  }
  model::Rng rng(6);
  std::vector<ParamVector> samples;
  for (int i = 0; i < 40000; ++i) samples.push_back(model::sample_params(vp, rng));
  const double kl = model::kl_penalty(vp, prior, samples);
  EXPECT_GT(kl, 0.0);
  EXPECT_NEAR(kl, exact, 0.02 * exact);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const model::Architecture arch;
  model::Rng rng(7);
  model::Checkpoint ckpt{arch, model::initialize(arch, 0.01, rng), 0x0123456789abcdefULL};
  ckpt.params.mu += model::draw_noise(arch.param_count(), rng) * 1e-3;
  const auto path = std::filesystem::temp_directory_path() / "bpinn_model_test.ckpt";
  model::save_checkpoint(path, ckpt);
  const auto back = model::load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.arch, ckpt.arch);
  EXPECT_EQ(back.config_hash, ckpt.config_hash);
  ASSERT_EQ(back.params.size(), ckpt.params.size());
  for (Eigen::Index i = 0; i < ckpt.params.mu.size(); ++i) {
    ASSERT_EQ(std::bit_cast<std::uint64_t>(back.params.mu[i]), std::bit_cast<std::uint64_t>(ckpt.params.mu[i]));
    ASSERT_EQ(std::bit_cast<std::uint64_t>(back.params.rho[i]), std::bit_cast<std::uint64_t>(ckpt.params.rho[i]));
  }
}

TEST(Checkpoint, RejectsInconsistentHeader) {
  const auto arch = testing::tiny_arch(2);
  model::Rng rng(8);
  const model::Checkpoint ckpt{arch, model::initialize(arch, 0.01, rng), 1};
  std::string text = model::serialize_checkpoint(ckpt);
  const auto pos = text.find("param_count 7");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 13, "param_count 8");
  EXPECT_THROW(model::parse_checkpoint(text), std::runtime_error);
  EXPECT_THROW(model::parse_checkpoint("not a checkpoint"), std::runtime_error);
}

}  // namespace
}  // namespace bpinn
