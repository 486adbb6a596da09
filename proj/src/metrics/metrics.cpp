#include "bpinn/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace bpinn::metrics {

namespace {

double summed(const std::vector<double>& values, std::size_t k, SumMode mode) {
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += mode == SumMode::Absolute ? std::abs(values[j]) : values[j];
  return s;
}

void require_pairs(const curvature::EigenSpectrum& spec, std::size_t k, const char* what) {
  if (k == 0) throw std::invalid_argument(std::string(what) + ": k must be positive");
  if (spec.size() < k) {
    std::ostringstream os;
    os << what << ": spectrum has " << spec.size() << " pairs, need " << k;
    throw std::invalid_argument(os.str());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& j) { return j.is_null() ? kMissing : j.get<double>(); }

}  // namespace

std::string_view sum_mode_name(SumMode mode) { return mode == SumMode::Absolute ? "absolute" : "signed"; }

SumMode parse_sum_mode(std::string_view name) {
  if (name == "signed") return SumMode::Signed;
  if (name == "absolute") return SumMode::Absolute;
  throw std::invalid_argument("unknown sum mode '" + std::string(name) + "' (expected signed or absolute)");
}

double spectral_contribution(const curvature::EigenSpectrum& spec_c, const curvature::EigenSpectrum& spec_tot,
                             std::size_t k, SumMode mode) {
  require_pairs(spec_c, k, "spectral_contribution");
  require_pairs(spec_tot, k, "spectral_contribution");
  const double denom = summed(spec_tot.values, k, mode);
  if (denom == 0.0) throw std::domain_error("spectral_contribution: total Hessian has zero top-k eigenvalue mass");
  return summed(spec_c.values, k, mode) / denom;
}

Alignment alignment_score(const ParamVector& g_c, const curvature::EigenSpectrum& spec_tot, std::size_t k,
                          SumMode mode) {
  require_pairs(spec_tot, k, "alignment_score");
  if (g_c.size() != spec_tot.vectors.rows()) throw std::invalid_argument("alignment_score: gradient length mismatch");
  const double gnorm = g_c.norm();
  if (gnorm == 0.0) return {0.0, true};
  const double denom = summed(spec_tot.values, k, mode);
  if (denom == 0.0) throw std::domain_error("alignment_score: total Hessian has zero top-k eigenvalue mass");
  double score = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto q = spec_tot.vectors.col(static_cast<Eigen::Index>(j));
    const double lambda = mode == SumMode::Absolute ? std::abs(spec_tot.values[j]) : spec_tot.values[j];
    score += (lambda / denom) * std::abs(g_c.dot(q)) / (gnorm * q.norm());
  }
  return {score, false};
}

ConditionEstimate make_condition(double max_abs, double min_abs, double eps, bool converged) {
  return {max_abs, min_abs, eps, curvature::condition_number(max_abs, min_abs, eps), converged};
}

ConditionEstimate estimate_condition(const curvature::CurvatureOperator& op, const curvature::EigenSpectrum& spec,
                                     double eps, const curvature::SmallestOptions& options) {
  const auto smallest = curvature::estimate_min_abs_eigenvalue(op, eps, options);
  return make_condition(spec.max_abs(), smallest.value, eps, smallest.converged);
}

double condition_number_ratio(const ConditionEstimate& c, const ConditionEstimate& tot) {
  if (!(tot.kappa > 0.0)) throw std::invalid_argument("condition_number_ratio: total condition number must be positive");
  return c.kappa / tot.kappa;
}

MetricsTable::MetricsTable() {
  for (auto c : physics::kConstraints) row(c).constraint = c;
}

MetricsTable aggregate_rank(MetricsTable table) {
  constexpr std::size_t kMetrics = 4;
  std::array<std::array<double, kMetrics>, 4> m{};
  for (std::size_t c = 0; c < 4; ++c) {
    const auto& r = table.rows[c];
    m[c] = {r.sc, r.as, -r.va, r.cnr};
  }
  std::array<std::array<double, kMetrics>, 4> normalized{};
  for (std::size_t j = 0; j < kMetrics; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t c = 0; c < 4; ++c) {
      if (!std::isfinite(m[c][j])) continue;
      lo = std::min(lo, m[c][j]);
      hi = std::max(hi, m[c][j]);
    }
    const bool constant = hi - lo <= 1e-12 * std::max(std::abs(hi), std::abs(lo));
    for (std::size_t c = 0; c < 4; ++c) {
      if (!std::isfinite(m[c][j])) {
        normalized[c][j] = kMissing;
      } else {
        normalized[c][j] = constant ? 0.5 : (m[c][j] - lo) / (hi - lo);
      }
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double sum = 0.0;
    int count = 0;
    for (double v : normalized[c]) {
      if (std::isfinite(v)) {
        sum += v;
        ++count;
      }
    }
    table.rows[c].rank = count > 0 ? sum / count : kMissing;
  }
  return table;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table) {
  auto out = open_out(path);
  const auto& meta = table.meta;
  out << "# config=" << meta.config_name << " config_hash=" << meta.config_hash << " seed=" << meta.seed
      << " analysis_seed=" << meta.analysis_seed << "\n"
      << "# k=" << meta.k << " eps=" << meta.eps << " grid_size=" << meta.grid_size
      << " operator=" << curvature::kind_name(meta.kind) << " sum_mode=" << sum_mode_name(meta.sum_mode) << "\n"
      << "constraint,sc,as,va,cnr,rank\n";
  for (const auto& r : table.rows) {
    out << physics::constraint_name(r.constraint) << ',' << r.sc << ',' << r.as << ',' << r.va << ',' << r.cnr << ','
        << r.rank << '\n';
  }
}

void write_metrics_json(const std::filesystem::path& path, const MetricsTable& table) {
  const auto& meta = table.meta;
  nlohmann::ordered_json doc;
  doc["schema_version"] = kMetricsSchemaVersion;
  doc["config_name"] = meta.config_name;
  doc["config_hash"] = meta.config_hash;
  doc["seeds"] = {{"experiment", meta.seed}, {"analysis", meta.analysis_seed}};
  doc["k"] = meta.k;
  doc["eps"] = meta.eps;
  doc["grid_size"] = meta.grid_size;
  doc["operator_kind"] = curvature::kind_name(meta.kind);
  doc["sum_mode"] = sum_mode_name(meta.sum_mode);
  doc["parameters"] = meta.parameters;
  auto& rows = doc["constraints"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json j;
    j["constraint"] = physics::constraint_name(r.constraint);
    j["sc"] = number_or_null(r.sc);
    j["as"] = number_or_null(r.as);
    j["va"] = number_or_null(r.va);
    j["cnr"] = number_or_null(r.cnr);
    j["rank"] = number_or_null(r.rank);
    j["flags"] = r.flags;
    j["error"] = r.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.error);
    rows.push_back(std::move(j));
  }
  auto& diag = doc["diagnostics"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : table.diagnostics) diag[key] = number_or_null(value);
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

MetricsTable read_metrics_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    const int version = doc.at("schema_version").get<int>();
    if (version != kMetricsSchemaVersion) {
      throw std::runtime_error("unsupported schema_version " + std::to_string(version));
    }
    MetricsTable t;
    auto& meta = t.meta;
    meta.config_name = doc.at("config_name").get<std::string>();
    meta.config_hash = doc.at("config_hash").get<std::string>();
    meta.seed = doc.at("seeds").at("experiment").get<std::uint64_t>();
    meta.analysis_seed = doc.at("seeds").at("analysis").get<std::uint64_t>();
    meta.k = doc.at("k").get<std::size_t>();
    meta.eps = doc.at("eps").get<double>();
    meta.grid_size = doc.at("grid_size").get<std::size_t>();
    meta.kind = curvature::parse_kind(doc.at("operator_kind").get<std::string>());
    meta.sum_mode = parse_sum_mode(doc.at("sum_mode").get<std::string>());
    meta.parameters = doc.at("parameters").get<std::size_t>();
    for (const auto& j : doc.at("constraints")) {
      auto& r = t.row(physics::parse_constraint(j.at("constraint").get<std::string>()));
      r.sc = number_from(j.at("sc"));
      r.as = number_from(j.at("as"));
      r.va = number_from(j.at("va"));
      r.cnr = number_from(j.at("cnr"));
      r.rank = number_from(j.at("rank"));
      r.flags = j.at("flags").get<std::vector<std::string>>();
      r.error = j.at("error").is_null() ? std::string() : j.at("error").get<std::string>();
    }
    for (const auto& [key, value] : doc.at("diagnostics").items()) t.diagnostics[key] = number_from(value);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace bpinn::metrics
