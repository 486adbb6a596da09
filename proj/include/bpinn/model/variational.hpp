#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bpinn/diffengine/tape.hpp"
#include "bpinn/model/architecture.hpp"

namespace bpinn::model {

using Rng = std::mt19937_64;

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

/// Diagonal Gaussian posterior: theta ~ N(mu, softplus(rho)^2).
struct VariationalParams {
  ParamVector mu;
  ParamVector rho;

  ParamVector sigma() const;
  /// The variational mean. No sampling, no noise.
  ParamVector freeze() const { return mu; }
  std::size_t size() const { return static_cast<std::size_t>(mu.size()); }
};

/// Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases 0;
/// rho = softplus^-1(sigma_init).
VariationalParams initialize(const Architecture& arch, double sigma_init, Rng& rng);

/// Standard normal noise of length n.
ParamVector draw_noise(std::size_t n, Rng& rng);

/// mu + softplus(rho) * eps.
ParamVector sample_params(const VariationalParams& vp, const ParamVector& eps);
ParamVector sample_params(const VariationalParams& vp, Rng& rng);

/// p(w) = pi N(w; 0, sigma1^2) + (1 - pi) N(w; 0, sigma2^2), applied
/// independently to every parameter.
struct ScaleMixturePrior {
  double sigma1 = 0.1;
  double sigma2 = 0.1;
  double pi = 0.5;

  void validate() const;
  double log_density(double w) const;
  /// d/dw of -log p(w).
  double neg_log_grad(double w) const;
  /// d2/dw2 of -log p(w).
  double neg_log_hess(double w) const;

  double neg_log_density(const ParamVector& theta) const;
  ParamVector neg_log_grad(const ParamVector& theta) const;
  ParamVector neg_log_hess_diag(const ParamVector& theta) const;
};

double gaussian_log_density(double x, double mean, double sigma);

/// Monte Carlo KL estimate (1/S) sum_s [log q(theta_s) - log p(theta_s)],
/// unscaled.
double kl_penalty(const VariationalParams& vp, const ScaleMixturePrior& prior,
                  std::span<const ParamVector> samples);

}  // namespace bpinn::model
