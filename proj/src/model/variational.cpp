#include "bpinn/model/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace bpinn::model {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be positive");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ParamVector VariationalParams::sigma() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

VariationalParams initialize(const Architecture& arch, double sigma_init, Rng& rng) {
  arch.validate();
  const std::size_t p = arch.param_count();
  VariationalParams vp{ParamVector::Zero(static_cast<Eigen::Index>(p)),
                       ParamVector::Constant(static_cast<Eigen::Index>(p), inverse_softplus(sigma_init))};
  for (const auto& L : layer_slices(arch)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t count = static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out);
    for (std::size_t i = 0; i < count; ++i) vp.mu[static_cast<Eigen::Index>(L.weight_offset + i)] = u(rng);
  }
  return vp;
}

ParamVector draw_noise(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector eps(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
  return eps;
}

ParamVector sample_params(const VariationalParams& vp, const ParamVector& eps) {
  return vp.mu + vp.sigma().cwiseProduct(eps);
}

ParamVector sample_params(const VariationalParams& vp, Rng& rng) { return sample_params(vp, draw_noise(vp.size(), rng)); }

void ScaleMixturePrior::validate() const {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("prior: sigma1 and sigma2 must be positive");
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("prior: pi must lie in [0, 1]");
}

double gaussian_log_density(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

namespace {

// Responsibilities of the two components at w, computed in log space.
struct Mixture {
  double log_p;
  double r1;
  double r2;
};

Mixture mixture(const ScaleMixturePrior& p, double w) {
  const double l1 = p.pi > 0.0 ? std::log(p.pi) + gaussian_log_density(w, 0.0, p.sigma1)
                               : -std::numeric_limits<double>::infinity();
  const double l2 = p.pi < 1.0 ? std::log1p(-p.pi) + gaussian_log_density(w, 0.0, p.sigma2)
                               : -std::numeric_limits<double>::infinity();
  const double m = std::max(l1, l2);
  const double e1 = std::exp(l1 - m);
  const double e2 = std::exp(l2 - m);
  const double s = e1 + e2;
  return {m + std::log(s), e1 / s, e2 / s};
}

}  // namespace

double ScaleMixturePrior::log_density(double w) const { return mixture(*this, w).log_p; }

double ScaleMixturePrior::neg_log_grad(double w) const {
  const Mixture m = mixture(*this, w);
  return m.r1 * w / (sigma1 * sigma1) + m.r2 * w / (sigma2 * sigma2);
}

double ScaleMixturePrior::neg_log_hess(double w) const {
  // (-log p)'' = sum_k r_k / s_k^2 - sum_k r_k w^2 / s_k^4 + ((-log p)')^2
  const Mixture m = mixture(*this, w);
  const double a1 = 1.0 / (sigma1 * sigma1);
  const double a2 = 1.0 / (sigma2 * sigma2);
  const double g = m.r1 * w * a1 + m.r2 * w * a2;
  return m.r1 * a1 + m.r2 * a2 - w * w * (m.r1 * a1 * a1 + m.r2 * a2 * a2) + g * g;
}

double ScaleMixturePrior::neg_log_density(const ParamVector& theta) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) s -= log_density(theta[i]);
  return s;
}

ParamVector ScaleMixturePrior::neg_log_grad(const ParamVector& theta) const {
  return theta.unaryExpr([this](double w) { return neg_log_grad(w); });
}

ParamVector ScaleMixturePrior::neg_log_hess_diag(const ParamVector& theta) const {
  return theta.unaryExpr([this](double w) { return neg_log_hess(w); });
}

double kl_penalty(const VariationalParams& vp, const ScaleMixturePrior& prior, std::span<const ParamVector> samples) {
  if (samples.empty()) throw std::invalid_argument("kl_penalty: no samples");
  const ParamVector sigma = vp.sigma();
  double total = 0.0;
  for (const auto& theta : samples) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      s += gaussian_log_density(theta[i], vp.mu[i], sigma[i]) - prior.log_density(theta[i]);
    }
    total += s;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace bpinn::model
