#include "bpinn/metrics/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "bpinn/physics/dataset.hpp"
#include "bpinn/util/parallel.hpp"

namespace bpinn::metrics {

namespace {

using curvature::OperatorKind;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

curvature::LanczosOptions lanczos_options(const AnalysisOptions& o, std::uint64_t seed) {
  curvature::LanczosOptions lo;
  lo.k = o.k;
  lo.max_iters = o.lanczos_max_iters;
  lo.tol = o.lanczos_tol;
  lo.seed = seed;
  return lo;
}

/// max_j |ritz_j - dense_j| / max|dense| over the top-k pairs.
double dense_discrepancy(const curvature::CurvatureOperator& op, const curvature::EigenSpectrum& spec) {
  const Eigen::MatrixXd H = curvature::dense_matrix(op);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
  std::vector<double> dense(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(dense.begin(), dense.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
  const double scale = std::max(std::abs(dense.front()), 1e-300);
  double worst = 0.0;
  for (std::size_t j = 0; j < spec.size(); ++j) worst = std::max(worst, std::abs(spec.values[j] - dense[j]) / scale);
  return worst;
}

bool has_negative_below(const curvature::EigenSpectrum& spec, double eps) {
  return std::any_of(spec.values.begin(), spec.values.end(), [eps](double v) { return v <= -eps; });
}

void add_flag(ConstraintMetrics& row, std::string flag) { row.flags.push_back(std::move(flag)); }

}  // namespace

bool AnalysisResult::all_succeeded() const {
  return std::all_of(table.rows.begin(), table.rows.end(), [](const ConstraintMetrics& r) { return r.error.empty(); });
}

AnalysisResult analyze(const curvature::FrozenModel& model, const AnalysisOptions& options) {
  if (!(options.eps_rel > 0.0)) throw std::invalid_argument("analyze: eps must be positive");
  if (options.grid_n < 1) throw std::invalid_argument("analyze: VA grid needs at least one point");
  const auto start = Clock::now();
  const auto& inputs = model.inputs();
  const auto P = static_cast<std::size_t>(model.dim());
  const bool dense_check = options.dense_check_max_p > 0 && P <= options.dense_check_max_p;
  const std::size_t workers = resolve_workers(options.workers);

  AnalysisResult result;
  auto& table = result.table;
  table.meta.k = options.k;
  table.meta.eps = options.eps_rel;
  table.meta.grid_size = options.grid_n;
  table.meta.kind = options.kind;
  table.meta.sum_mode = options.sum_mode;
  table.meta.parameters = P;
  table.meta.analysis_seed = options.seed;

  const auto total_op = curvature::make_constraint_operator(curvature::Term::Total, model, options.kind);
  result.total = curvature::lanczos_topk(total_op, lanczos_options(options, options.seed));
  const double eps_tot = options.eps_rel * result.total.max_abs();
  if (!(eps_tot > 0.0)) throw std::domain_error("analyze: total Hessian spectrum is identically zero");
  auto smallest = options.smallest;
  smallest.seed = options.seed + 100;
  result.total_condition = estimate_condition(total_op, result.total, eps_tot, smallest);
  table.diagnostics["total.lambda_max"] = result.total.values.front();
  table.diagnostics["total.eps"] = eps_tot;
  table.diagnostics["total.kappa"] = result.total_condition.kappa;
  table.diagnostics["total.min_abs_estimate"] = result.total_condition.min_abs;
  table.diagnostics["total.lanczos_iterations"] = static_cast<double>(result.total.iterations);
  table.diagnostics["total.lanczos_converged"] = result.total.converged ? 1.0 : 0.0;
  table.diagnostics["total.min_eig_converged"] = result.total_condition.converged ? 1.0 : 0.0;
  if (dense_check) table.diagnostics["dense_check.total.max_rel_err"] = dense_discrepancy(total_op, result.total);

  const auto grid = physics::uniform_grid(inputs.problem.t0, inputs.problem.t1, options.grid_n);
  const Eigen::MatrixXd jacobian = curvature::jacobian_outputs(inputs.arch, model.params(), grid.times);

  const std::size_t constraint_workers = std::min<std::size_t>(workers, physics::kConstraints.size());
  auto variance = options.variance;
  variance.workers = std::max<std::size_t>(1, workers / constraint_workers);
  std::array<std::map<std::string, double>, 4> diagnostics;

  parallel_for(physics::kConstraints.size(), constraint_workers, [&](std::size_t idx) {
    const auto c = physics::kConstraints[idx];
    const auto term = curvature::term_of(c);
    const std::string label(physics::constraint_name(c));
    auto& row = table.row(c);
    auto& detail = result.constraints[idx];
    auto& diag = diagnostics[idx];
    const auto c_start = Clock::now();
    try {
      const auto op = curvature::make_constraint_operator(term, model, options.kind);
      detail.spectrum = curvature::lanczos_topk(op, lanczos_options(options, options.seed + 1 + idx));
      const auto& spec = *detail.spectrum;
      if (!spec.converged) add_flag(row, "lanczos_not_converged");
      diag[label + ".lambda_max"] = spec.values.front();
      diag[label + ".lanczos_iterations"] = static_cast<double>(spec.iterations);
      if (dense_check) diag["dense_check." + label + ".max_rel_err"] = dense_discrepancy(op, spec);

      double scale = spec.max_abs();
      if (scale == 0.0) {
        add_flag(row, "zero_curvature");
        scale = result.total.max_abs();
      }
      detail.eps = options.eps_rel * scale;
      diag[label + ".eps"] = detail.eps;

      row.sc = spectral_contribution(spec, result.total, options.k, options.sum_mode);
      const auto align = alignment_score(model.gradient(c), result.total, options.k, options.sum_mode);
      row.as = align.value;
      if (align.zero_gradient) add_flag(row, "as_zero_gradient");

      auto small = options.smallest;
      small.seed = options.seed + 101 + idx;
      detail.condition = estimate_condition(op, spec, detail.eps, small);
      if (!detail.condition.converged) add_flag(row, "min_eig_not_converged");
      diag[label + ".kappa"] = detail.condition.kappa;
      row.cnr = condition_number_ratio(detail.condition, result.total_condition);

      detail.variance_kind = options.kind;
      bool fallback = options.kind == OperatorKind::Exact && has_negative_below(spec, detail.eps);
      if (!fallback) {
        try {
          detail.variance = variance_attribution(op.with_eps(detail.eps), jacobian, grid.times, variance);
        } catch (const VarianceSolveError& e) {
          if (!e.indefinite() || options.kind != OperatorKind::Exact) throw;
          fallback = true;
        }
      }
      if (fallback) {
        add_flag(row, "va_gauss_newton_fallback");
        detail.variance_kind = OperatorKind::GaussNewton;
        const auto gn = curvature::make_constraint_operator(term, model, OperatorKind::GaussNewton, detail.eps);
        detail.variance = variance_attribution(gn, jacobian, grid.times, variance);
      }
      row.va = detail.variance->value;
      if (!detail.variance->converged) add_flag(row, "va_cg_not_converged");
      diag[label + ".va_solves"] = static_cast<double>(detail.variance->solves);
      diag[label + ".va_cg_iterations"] = static_cast<double>(detail.variance->cg_iterations);
      diag[label + ".va_max_relative_residual"] = detail.variance->max_relative_residual;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    diag[label + ".seconds"] = seconds_since(c_start);
  });

  for (const auto& d : diagnostics) table.diagnostics.insert(d.begin(), d.end());
  table = aggregate_rank(std::move(table));
  table.diagnostics["seconds"] = seconds_since(start);
  return result;
}

std::vector<std::pair<std::string, curvature::EigenSpectrum>> labelled_spectra(const AnalysisResult& result) {
  std::vector<std::pair<std::string, curvature::EigenSpectrum>> out;
  for (std::size_t i = 0; i < physics::kConstraints.size(); ++i) {
    const auto& spec = result.constraints[i].spectrum;
    if (spec) out.emplace_back(std::string(physics::constraint_name(physics::kConstraints[i])), *spec);
  }
  out.emplace_back("total", result.total);
  return out;
}

}  // namespace bpinn::metrics
