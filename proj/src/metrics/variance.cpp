#include "bpinn/metrics/variance.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/SVD>

#include "bpinn/util/parallel.hpp"

namespace bpinn::metrics {

namespace {

struct Solve {
  ParamVector rhs;
  double weight;  // multiplies rhs^T A^-1 rhs
  double x;       // grid point reported on failure
};

std::vector<Solve> per_point_solves(const Eigen::MatrixXd& J, std::span<const double> xs) {
  std::vector<Solve> solves;
  solves.reserve(static_cast<std::size_t>(J.rows()));
  for (Eigen::Index i = 0; i < J.rows(); ++i) solves.push_back({J.row(i).transpose(), 1.0, xs[static_cast<std::size_t>(i)]});
  return solves;
}

std::vector<Solve> compressed_solves(const Eigen::MatrixXd& J, std::span<const double> xs, double rank_tol) {
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  std::vector<Solve> solves;
  if (s.size() == 0 || s[0] == 0.0) return solves;
  const double cutoff = rank_tol * s[0] * s[0];
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] * s[i] <= cutoff) break;
    Eigen::Index dominant = 0;
    svd.matrixU().col(i).cwiseAbs().maxCoeff(&dominant);
    solves.push_back({svd.matrixV().col(i), s[i] * s[i], xs[static_cast<std::size_t>(dominant)]});
  }
  return solves;
}

}  // namespace

VarianceResult variance_attribution(const curvature::CurvatureOperator& op, const Eigen::MatrixXd& jacobian,
                                    std::span<const double> xs, const VarianceOptions& options) {
  if (jacobian.rows() == 0) throw std::invalid_argument("variance_attribution: empty grid");
  if (static_cast<std::size_t>(jacobian.rows()) != xs.size()) {
    throw std::invalid_argument("variance_attribution: one grid point per Jacobian row required");
  }
  if (jacobian.cols() != op.dim()) throw std::invalid_argument("variance_attribution: Jacobian width mismatch");
  const auto solves = options.compress ? compressed_solves(jacobian, xs, options.rank_tol) : per_point_solves(jacobian, xs);

  std::vector<double> quad(solves.size(), 0.0);
  std::vector<curvature::CgResult> results(solves.size());
  parallel_for(solves.size(), options.workers, [&](std::size_t i) {
    const auto& s = solves[i];
    try {
      results[i] = curvature::cg_solve(op, s.rhs, options.cg);
    } catch (const curvature::IndefiniteOperator& e) {
      std::ostringstream os;
      os << "variance solve at x=" << s.x << ": " << e.what();
      throw VarianceSolveError(os.str(), s.x, true);
    }
    quad[i] = s.weight * s.rhs.dot(results[i].x);
    if (!std::isfinite(quad[i])) {
      std::ostringstream os;
      os << "variance solve at x=" << s.x << " produced a non-finite quadratic form";
      throw VarianceSolveError(os.str(), s.x, false);
    }
  });

  VarianceResult out;
  double sum = 0.0;
  for (std::size_t i = 0; i < solves.size(); ++i) {
    sum += quad[i];
    out.cg_iterations += results[i].iterations;
    out.max_relative_residual = std::max(out.max_relative_residual, results[i].relative_residual);
    out.converged = out.converged && results[i].converged;
  }
  out.solves = solves.size();
  out.value = sum / static_cast<double>(jacobian.rows());
  return out;
}

}  // namespace bpinn::metrics
