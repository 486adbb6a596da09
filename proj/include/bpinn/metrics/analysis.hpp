#pragma once

// The full hierarchy analysis at a frozen parameter vector: spectra of the
// total and per-constraint Hessians, the four metrics and their ranks.

#include <array>
#include <optional>
#include <string>

#include "bpinn/curvature/cg.hpp"
#include "bpinn/curvature/lanczos.hpp"
#include "bpinn/curvature/operator.hpp"
#include "bpinn/metrics/metrics.hpp"
#include "bpinn/metrics/variance.hpp"

namespace bpinn::metrics {

struct AnalysisOptions {
  std::size_t k = 20;
  /// Each operator is regularized with eps_rel * max|lambda| of its own spectrum.
  double eps_rel = 1e-6;
  /// Points of the uniform grid over the time span used for VA.
  std::size_t grid_n = 500;
  curvature::OperatorKind kind = curvature::OperatorKind::Exact;
  SumMode sum_mode = SumMode::Signed;
  std::size_t lanczos_max_iters = 300;
  double lanczos_tol = 1e-6;
  curvature::SmallestOptions smallest;
  VarianceOptions variance;
  /// 0 selects the hardware concurrency.
  std::size_t workers = 0;
  std::uint64_t seed = 0;
  /// Cross-check every spectrum against a dense eigensolver when P is at
  /// most this; 0 disables the check.
  std::size_t dense_check_max_p = 2000;
};

struct ConstraintAnalysis {
  std::optional<curvature::EigenSpectrum> spectrum;
  ConditionEstimate condition;
  double eps = 0.0;
  std::optional<VarianceResult> variance;
  /// Operator kind the VA solves ran on.
  curvature::OperatorKind variance_kind = curvature::OperatorKind::Exact;
};

struct AnalysisResult {
  MetricsTable table;
  curvature::EigenSpectrum total;
  ConditionEstimate total_condition;
  std::array<ConstraintAnalysis, 4> constraints;

  bool all_succeeded() const;
};

/// Per-constraint failures are recorded in the table (error message, NaN
/// metrics) without stopping the other constraints. Failures of the total
/// operator throw, since every metric depends on it.
AnalysisResult analyze(const curvature::FrozenModel& model, const AnalysisOptions& options);

/// Spectra of every operator that succeeded, labelled data/pde/ic/bc/total.
std::vector<std::pair<std::string, curvature::EigenSpectrum>> labelled_spectra(const AnalysisResult& result);

}  // namespace bpinn::metrics
