#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bpinn/curvature/operator.hpp"

namespace bpinn::curvature {

struct LanczosOptions {
  std::size_t k = 20;
  /// Krylov dimension cap; clamped to P.
  std::size_t max_iters = 300;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Top-k Ritz pairs ordered by |lambda| descending.
struct EigenSpectrum {
  std::vector<double> values;
  Eigen::MatrixXd vectors;  // P x k, unit columns
  std::vector<double> residual_norms;  // ||H q - lambda q||, computed explicitly
  std::size_t iterations = 0;
  std::size_t restarts = 0;
  bool converged = false;

  std::size_t size() const { return values.size(); }
  double max_abs() const;
};

/// A pair counts as converged when its residual is at most tol * |lambda|,
/// or at most 1e-12 * max|lambda| for numerically zero eigenvalues.
bool pair_converged(double value, double residual, double max_abs, double tol);

/// Lanczos with full reorthogonalization from a seeded Gaussian start.
/// Breakdown restarts with a fresh vector orthogonal to the Krylov basis.
/// When max_iters is reached first the result is returned with
/// converged = false.
EigenSpectrum lanczos_topk(const LinearMap& op, Eigen::Index dim, const LanczosOptions& options);
EigenSpectrum lanczos_topk(const CurvatureOperator& op, const LanczosOptions& options);

/// Columns `constraint,rank_index,eigenvalue,residual_norm`; rank_index
/// starts at 1.
void write_spectra_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, EigenSpectrum>>& spectra,
                       const std::string& comment = {});

}  // namespace bpinn::curvature
