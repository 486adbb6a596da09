#include "bpinn/training/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace bpinn::training {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
}

void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state, parameter and gradient sizes differ");
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

}  // namespace bpinn::training
