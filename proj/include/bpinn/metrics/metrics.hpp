#pragma once

// Constraint-hierarchy diagnostics for the four loss terms.
//
//   SC_c  = sum_j lambda_j(H_c) / sum_j lambda_j(H_tot)          (top-k by |lambda|)
//   AS_c  = sum_j w_j |<g_c, q_j>| / (|g_c| |q_j|),  w_j = lambda_j / sum_i lambda_i
//   VA_c  = mean_x J_x^T (H_c + eps I)^-1 J_x                     (see variance.hpp)
//   CNR_c = kappa(H_c) / kappa(H_tot)
//
// H_c is the unweighted Hessian of L_c; the loss weights only enter H_tot.

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bpinn/curvature/cg.hpp"
#include "bpinn/curvature/lanczos.hpp"
#include "bpinn/curvature/operator.hpp"
#include "bpinn/physics/problem.hpp"

namespace bpinn::metrics {

/// How Ritz values are summed in SC and in the AS weights. Selection is
/// always by |lambda|; Absolute sums |lambda| instead of lambda.
enum class SumMode { Signed, Absolute };

std::string_view sum_mode_name(SumMode mode);
SumMode parse_sum_mode(std::string_view name);

/// Throws std::domain_error when the total's top-k sum is zero and
/// std::invalid_argument when either spectrum has fewer than k pairs.
double spectral_contribution(const curvature::EigenSpectrum& spec_c, const curvature::EigenSpectrum& spec_tot,
                             std::size_t k, SumMode mode = SumMode::Signed);

struct Alignment {
  double value = 0.0;
  /// g_c was exactly zero, so the score is reported as 0.
  bool zero_gradient = false;
};

Alignment alignment_score(const ParamVector& g_c, const curvature::EigenSpectrum& spec_tot, std::size_t k,
                          SumMode mode = SumMode::Signed);

/// kappa_hat = max|lambda| / max(min|lambda|, eps)
struct ConditionEstimate {
  double max_abs = 0.0;
  double min_abs = 0.0;
  double eps = 0.0;
  double kappa = 0.0;
  bool converged = true;
};

ConditionEstimate make_condition(double max_abs, double min_abs, double eps, bool converged = true);

/// Largest |lambda| from the spectrum, smallest from shift-inverted Lanczos
/// with shift eps.
ConditionEstimate estimate_condition(const curvature::CurvatureOperator& op, const curvature::EigenSpectrum& spec,
                                     double eps, const curvature::SmallestOptions& options);

double condition_number_ratio(const ConditionEstimate& c, const ConditionEstimate& tot);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct ConstraintMetrics {
  physics::Constraint constraint = physics::Constraint::Data;
  double sc = kMissing;
  double as = kMissing;
  double va = kMissing;
  double cnr = kMissing;
  double rank = kMissing;
  /// Non-fatal conditions, e.g. "as_zero_gradient".
  std::vector<std::string> flags;
  /// Set when a metric could not be computed; its value stays NaN.
  std::string error;
};

struct MetricsMetadata {
  std::string config_name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint64_t analysis_seed = 0;
  std::size_t k = 0;
  /// Relative Tikhonov factor; each operator uses eps * max|lambda|.
  double eps = 0.0;
  std::size_t grid_size = 0;
  curvature::OperatorKind kind = curvature::OperatorKind::Exact;
  SumMode sum_mode = SumMode::Signed;
  std::size_t parameters = 0;
};

struct MetricsTable {
  std::array<ConstraintMetrics, 4> rows;
  MetricsMetadata meta;
  /// Extra scalar outputs, e.g. "total.lambda_max".
  std::map<std::string, double> diagnostics;

  MetricsTable();
  ConstraintMetrics& row(physics::Constraint c) { return rows[static_cast<std::size_t>(c)]; }
  const ConstraintMetrics& row(physics::Constraint c) const { return rows[static_cast<std::size_t>(c)]; }
};

/// Min-max normalizes each metric across the constraints (VA negated
/// first, so the lowest variance scores 1) and averages the normalized
/// metrics into rank. A metric that is constant across constraints, up to
/// a relative 1e-12, scores 0.5 everywhere. Missing (non-finite) values
/// are left out of both the normalization and the mean.
MetricsTable aggregate_rank(MetricsTable table);

inline constexpr int kMetricsSchemaVersion = 1;

/// Columns `constraint,sc,as,va,cnr,rank`, preceded by `# ` comment lines
/// carrying the metadata.
void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table);
void write_metrics_json(const std::filesystem::path& path, const MetricsTable& table);
MetricsTable read_metrics_json(const std::filesystem::path& path);

}  // namespace bpinn::metrics
