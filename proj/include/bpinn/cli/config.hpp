#pragma once

// Experiment configuration as flat `key = value` text.
//
//   # comment
//   name = base
//   problem.mu = 1
//   weights.pde = 10
//
// Every key has a default (the base preset), so a file only lists what it
// changes. Unknown keys, duplicates and malformed values are all collected
// and reported together.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpinn/curvature/operator.hpp"
#include "bpinn/metrics/analysis.hpp"
#include "bpinn/metrics/metrics.hpp"
#include "bpinn/model/architecture.hpp"
#include "bpinn/model/variational.hpp"
#include "bpinn/physics/dataset.hpp"
#include "bpinn/physics/problem.hpp"
#include "bpinn/training/train.hpp"

namespace bpinn::cli {

struct AnalysisSettings {
  std::size_t k = 20;
  double eps = 1e-6;  // relative to each operator's max|lambda|
  std::size_t grid_n = 500;
  curvature::OperatorKind kind = curvature::OperatorKind::Exact;
  metrics::SumMode sum_mode = metrics::SumMode::Signed;
  std::size_t lanczos_max_iters = 300;
  double lanczos_tol = 1e-6;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string name = "base";
  /// Data noise draws use `seed`, training uses `seed + 1`.
  std::uint64_t seed = 1234;
  physics::VdpProblem problem;
  /// lambda_data, lambda_pde, lambda_ic, lambda_bc
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
  int hidden_layers = 3;
  int hidden_width = 50;
  bool normalize_input = true;
  model::ScaleMixturePrior prior;
  std::size_t data_points = 20;
  double noise_sigma = 0.05;
  physics::Placement placement = physics::Placement::Uniform;
  std::size_t n_collocation = 500;
  /// weights and seed inside are ignored; see train_config().
  training::TrainConfig train;
  AnalysisSettings analysis;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;

  model::Architecture architecture() const;
  training::TrainConfig train_config() const;
  metrics::AnalysisOptions analysis_options() const;
  /// The MAP-style objective behind the curvature analysis weighs the prior
  /// like the training objective weighs the KL term.
  double prior_weight() const { return train.kl_scale; }

  bool operator==(const ExperimentConfig&) const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key in a fixed order, doubles in shortest round-trip form.
std::string serialize_config(const ExperimentConfig& config);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// 64-bit FNV-1a of serialize_config(config).
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hash_hex(std::uint64_t hash);

/// All accepted keys, in serialization order.
const std::vector<std::string>& config_keys();

/// base, high-mu, high-lambda-pde, low-lambda-pde, no-bc.
const std::vector<std::string>& preset_names();
ExperimentConfig preset(const std::string& name);

}  // namespace bpinn::cli
