#pragma once

// Bayes-by-Backprop training of the variational network.
//
// Each epoch draws mc_samples reparameterized parameter vectors, averages
// the weighted physics objective and the scaled KL estimate over them, and
// takes one Adam step on the concatenation (mu, rho).

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpinn/model/variational.hpp"
#include "bpinn/physics/dataset.hpp"
#include "bpinn/physics/objective.hpp"
#include "bpinn/physics/problem.hpp"
#include "bpinn/training/adam.hpp"

namespace bpinn::training {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 2000;
  int mc_samples = 5;
  double kl_scale = 1e-3;
  /// lambda_data, lambda_pde, lambda_ic, lambda_bc
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double sigma_init = 0.05;
  int log_every = 10;
  std::uint64_t seed = 0;

  void validate() const;
  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps}; }
};

struct LossRecord {
  int epoch;
  double data;
  double pde;
  double ic;
  double bc;
  double kl;     // unscaled
  double total;  // sum_c lambda_c L_c + kl_scale * kl
};

/// Losses are MC averages over the draws of the logged epoch, taken before
/// that epoch's update.
struct LossHistory {
  std::vector<LossRecord> records;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::string term, const std::string& detail);
  int epoch() const { return epoch_; }
  const std::string& term() const { return term_; }

 private:
  int epoch_;
  std::string term_;
};

struct TrainResult {
  model::VariationalParams params;
  LossHistory history;
};

/// Sampled objective at fixed standard-normal draws and its gradient with
/// respect to the packed vector (mu, rho). The KL term uses the same draws.
struct ObjectiveEstimate {
  double total = 0.0;
  std::array<double, 4> terms{};  // unweighted per-constraint losses
  double kl = 0.0;                // unscaled
  Eigen::VectorXd gradient;       // length 2P
};

ObjectiveEstimate estimate_objective(const physics::LossEvaluator& objective, const model::ScaleMixturePrior& prior,
                                     double kl_scale, const model::VariationalParams& vp,
                                     std::span<const ParamVector> noise);

TrainResult train(const TrainConfig& config, const model::Architecture& arch, const physics::VdpProblem& problem,
                  const physics::Dataset& data, const physics::CollocationGrid& grid,
                  const model::ScaleMixturePrior& prior);

/// Columns `epoch,loss_data,loss_pde,loss_ic,loss_bc,kl,total`.
void write_history_csv(const std::filesystem::path& path, const LossHistory& history,
                       const std::string& comment = {});

}  // namespace bpinn::training
