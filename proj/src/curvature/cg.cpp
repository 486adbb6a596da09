#include "bpinn/curvature/cg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bpinn::curvature {

CgResult cg_solve(const LinearMap& A, const ParamVector& b, const CgOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("cg_solve: tol must be positive");
  CgResult res;
  res.x = ParamVector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  ParamVector r = b;
  ParamVector p = r;
  double rr = r.squaredNorm();
  const double target = options.tol * bnorm;
  while (res.iterations < options.max_iters) {
    const ParamVector Ap = A(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      std::ostringstream os;
      os << "cg_solve: operator is not positive definite (p^T A p = " << pAp << " at iteration "
         << res.iterations << "); increase eps or use the gauss-newton operator kind";
      throw IndefiniteOperator(os.str());
    }
    const double step = rr / pAp;
    res.x += step * p;
    r -= step * Ap;
    ++res.iterations;
    const double rr_next = r.squaredNorm();
    if (std::sqrt(rr_next) <= target) {
      r = b - A(res.x);
      const double true_rr = r.squaredNorm();
      if (std::sqrt(true_rr) <= target) break;
      // the recursion drifted; restart from the true residual
      rr = true_rr;
      p = r;
      continue;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  res.relative_residual = (b - A(res.x)).norm() / bnorm;
  res.converged = res.relative_residual <= options.tol;
  return res;
}

CgResult cg_solve(const CurvatureOperator& op, const ParamVector& rhs, const CgOptions& options) {
  return cg_solve([&op](const ParamVector& v) { return op.apply_shifted(v); }, rhs, options);
}

SmallestMagnitude estimate_min_abs_eigenvalue(const CurvatureOperator& op, double shift,
                                              const SmallestOptions& options) {
  if (!(shift > 0.0)) throw std::invalid_argument("estimate_min_abs_eigenvalue: shift must be positive");
  const bool psd = op.psd();
  LinearMap shifted;
  if (psd) {
    shifted = [&op, shift](const ParamVector& v) { return ParamVector(op.apply(v) + shift * v); };
  } else {
    shifted = [&op, shift](const ParamVector& v) { return ParamVector(op.apply(op.apply(v)) + shift * shift * v); };
  }
  std::size_t inner = 0;
  bool inner_ok = true;
  const LinearMap inverse = [&](const ParamVector& v) {
    const auto r = cg_solve(shifted, v, options.cg);
    inner += r.iterations;
    inner_ok = inner_ok && r.converged;
    return r.x;
  };
  LanczosOptions lo;
  lo.k = 1;
  lo.max_iters = std::max<std::size_t>(1, options.max_iters);
  lo.tol = options.tol;
  lo.seed = options.seed;
  const auto spec = lanczos_topk(inverse, op.dim(), lo);
  SmallestMagnitude out;
  const double theta = spec.values.front();
  const double inv = theta > 0.0 ? 1.0 / theta : 0.0;
  out.value = psd ? std::max(inv - shift, 0.0) : std::sqrt(std::max(inv - shift * shift, 0.0));
  out.outer_iterations = spec.iterations;
  out.inner_iterations = inner;
  out.converged = spec.converged && inner_ok;
  return out;
}

double condition_number(double max_abs, double min_abs, double eps) {
  const double floor = std::max(min_abs, eps);
  if (!(floor > 0.0)) throw std::invalid_argument("condition_number: eps must be positive");
  return max_abs / floor;
}

}  // namespace bpinn::curvature
