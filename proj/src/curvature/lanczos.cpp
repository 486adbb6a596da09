#include "bpinn/curvature/lanczos.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace bpinn::curvature {

namespace {

Eigen::VectorXd gaussian(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

// Two passes of classical Gram-Schmidt against the first m columns.
void orthogonalize(Eigen::VectorXd& w, const Eigen::MatrixXd& Q, Eigen::Index m) {
  if (m == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd c = Q.leftCols(m).transpose() * w;
    w.noalias() -= Q.leftCols(m) * c;
  }
}

struct Ritz {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  std::vector<Eigen::Index> order;  // by |value| descending
};

Ritz ritz(const std::vector<double>& alpha, const std::vector<double>& beta, Eigen::Index m) {
  Eigen::VectorXd diag(m), sub(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index i = 0; i < m; ++i) diag[i] = alpha[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i + 1 < m; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
  Ritz r;
  if (m == 1) {
    r.values = diag;
    r.vectors = Eigen::MatrixXd::Ones(1, 1);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    r.values = es.eigenvalues();
    r.vectors = es.eigenvectors();
  }
  r.order.resize(static_cast<std::size_t>(m));
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(r.values[a]) > std::abs(r.values[b]); });
  return r;
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

double EigenSpectrum::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

bool pair_converged(double value, double residual, double max_abs, double tol) {
  return residual <= tol * std::abs(value) || residual <= 1e-12 * max_abs;
}

EigenSpectrum lanczos_topk(const LinearMap& op, Eigen::Index dim, const LanczosOptions& options) {
  if (dim < 1) throw std::invalid_argument("lanczos_topk: empty operator");
  if (options.k < 1) throw std::invalid_argument("lanczos_topk: k must be >= 1");
  if (options.k > static_cast<std::size_t>(dim)) throw std::invalid_argument("lanczos_topk: k exceeds the dimension");
  if (options.max_iters < options.k) throw std::invalid_argument("lanczos_topk: max_iters must be >= k");
  if (!(options.tol > 0.0)) throw std::invalid_argument("lanczos_topk: tol must be positive");
  const auto m_max = static_cast<Eigen::Index>(std::min<std::size_t>(options.max_iters, static_cast<std::size_t>(dim)));
  const auto k = static_cast<Eigen::Index>(options.k);

  std::mt19937_64 rng(options.seed);
  Eigen::MatrixXd Q(dim, m_max);
  std::vector<double> alpha, beta;
  Eigen::VectorXd q = gaussian(dim, rng);
  q.normalize();
  EigenSpectrum out;
  double norm_estimate = 0.0;

  Eigen::Index m = 0;
  while (m < m_max) {
    Q.col(m) = q;
    Eigen::VectorXd w = op(q);
    const double a = q.dot(w);
    alpha.push_back(a);
    w -= a * q;
    if (m > 0) w -= beta.back() * Q.col(m - 1);
    orthogonalize(w, Q, m + 1);
    double b = w.norm();
    ++m;
    norm_estimate = std::max(norm_estimate, std::abs(a) + b);

    bool check = m >= k && ((m - k) % 5 == 0 || m == m_max);
    const bool breakdown = b <= 1e-13 * std::max(norm_estimate, 1e-300);
    if (breakdown) {
      b = 0.0;
      check = m >= k;
    }
    beta.push_back(b);
    if (check) {
      const Ritz r = ritz(alpha, beta, m);
      const double top = std::abs(r.values[r.order.front()]);
      bool all = true;
      for (Eigen::Index j = 0; j < k && all; ++j) {
        const Eigen::Index i = r.order[static_cast<std::size_t>(j)];
        all = pair_converged(r.values[i], std::abs(b * r.vectors(m - 1, i)), top, options.tol);
      }
      if (all) break;
    }
    if (m == m_max) break;
    if (breakdown) {
      // invariant subspace found; continue in its orthogonal complement
      Eigen::VectorXd fresh = gaussian(dim, rng);
      orthogonalize(fresh, Q, m);
      const double n = fresh.norm();
      if (n <= 1e-10) break;
      q = fresh / n;
      ++out.restarts;
    } else {
      q = w / b;
    }
  }

  const Ritz r = ritz(alpha, beta, m);
  const Eigen::Index kk = std::min(k, m);
  out.iterations = static_cast<std::size_t>(m);
  out.vectors.resize(dim, kk);
  for (Eigen::Index j = 0; j < kk; ++j) {
    const Eigen::Index i = r.order[static_cast<std::size_t>(j)];
    Eigen::VectorXd y = Q.leftCols(m) * r.vectors.col(i);
    y.normalize();
    out.vectors.col(j) = y;
    out.values.push_back(r.values[i]);
  }
  out.converged = kk == k;
  const double top = out.max_abs();
  for (Eigen::Index j = 0; j < kk; ++j) {
    const Eigen::VectorXd y = out.vectors.col(j);
    const double res = (op(y) - out.values[static_cast<std::size_t>(j)] * y).norm();
    out.residual_norms.push_back(res);
    out.converged = out.converged && pair_converged(out.values[static_cast<std::size_t>(j)], res, top, options.tol);
  }
  return out;
}

EigenSpectrum lanczos_topk(const CurvatureOperator& op, const LanczosOptions& options) {
  return lanczos_topk([&op](const ParamVector& v) { return op.apply(v); }, op.dim(), options);
}

void write_spectra_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, EigenSpectrum>>& spectra, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!comment.empty()) {
    std::istringstream in(comment);
    for (std::string line; std::getline(in, line);) out << "# " << line << "\n";
  }
  out << "constraint,rank_index,eigenvalue,residual_norm\n";
  for (const auto& [name, spec] : spectra) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      out << name << "," << j + 1 << "," << fmt(spec.values[j]) << "," << fmt(spec.residual_norms[j]) << "\n";
    }
  }
}

}  // namespace bpinn::curvature
