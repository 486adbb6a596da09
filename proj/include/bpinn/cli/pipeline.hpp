#pragma once

// train -> analyze -> report, each reading and writing run directories.
//
// A run directory holds
//   config.cfg          configuration snapshot
//   checkpoint.txt      variational parameters (mu, rho)
//   dataset.csv         observations used for training
//   reference.csv       reference ODE solution
//   loss_history.csv    per-term losses every train.log_every epochs
//   analysis_config.cfg configuration after analyze-time overrides
//   spectra.csv         top-k Ritz values of every H_c and of H_tot
//   metrics.csv/.json   SC, AS, VA, CNR and rank per constraint

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpinn/cli/config.hpp"
#include "bpinn/metrics/analysis.hpp"
#include "bpinn/training/train.hpp"

namespace bpinn::cli {

/// Bad invocation or inputs that do not fit together; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training or analysis failed numerically; exit code 1.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

struct RunInputs {
  physics::DenseSolution reference;
  physics::Dataset data;
  physics::CollocationGrid grid;
};

/// Reference solution, seeded observations and collocation grid of a config.
RunInputs prepare_inputs(const ExperimentConfig& config);

curvature::AnalysisInputs analysis_inputs(const ExperimentConfig& config, const RunInputs& run);

struct TrainOutcome {
  training::TrainResult result;
  std::filesystem::path checkpoint;
};

/// Throws NumericalFailure on divergence.
TrainOutcome run_train(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

struct AnalyzeOverrides {
  std::optional<std::size_t> k;
  std::optional<double> eps;
  bool gauss_newton = false;
  std::optional<std::size_t> workers;
};

ExperimentConfig apply_overrides(ExperimentConfig config, const AnalyzeOverrides& overrides);

/// Writes every output even when single constraints fail; those failures
/// are listed in the result (AnalysisResult::all_succeeded).
metrics::AnalysisResult run_analyze(const std::filesystem::path& checkpoint, const ExperimentConfig& config,
                                    const std::filesystem::path& out, const AnalyzeOverrides& overrides,
                                    std::ostream& log);

struct SpectrumRow {
  std::string label;
  std::size_t rank_index;
  double eigenvalue;
  double residual_norm;
};

std::vector<SpectrumRow> read_spectra_csv(const std::filesystem::path& path);

struct ReportRun {
  std::filesystem::path dir;
  metrics::MetricsTable table;
  std::vector<SpectrumRow> spectra;
};

struct Report {
  std::vector<ReportRun> runs;
  std::size_t k = 0;
  std::vector<std::string> warnings;
};

/// Writes eigenspectra.csv (long format), ranks.csv, summary.csv and
/// summary.txt. Runs with different k are truncated to the smallest.
Report run_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out, std::ostream& log);

/// Fixed-width table of one run's metrics.
std::string format_metrics(const metrics::MetricsTable& table);

}  // namespace bpinn::cli
