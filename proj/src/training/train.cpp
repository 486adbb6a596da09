#include "bpinn/training/train.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>


namespace bpinn::training {

namespace {

std::string describe_divergence(int epoch, const std::string& term, const std::string& detail) {
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ": non-finite " << term << " loss";
  if (!detail.empty()) os << " (" << detail << ")";
  os << "; lower the learning rate or the loss weights";
  return os.str();
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

TrainingDiverged::TrainingDiverged(int epoch, std::string term, const std::string& detail)
    : std::runtime_error(describe_divergence(epoch, term, detail)), epoch_(epoch), term_(std::move(term)) {}

void TrainConfig::validate() const {
  adam().validate();
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (mc_samples < 1) throw std::invalid_argument("train: mc_samples must be >= 1");
  if (!(kl_scale >= 0.0)) throw std::invalid_argument("train: kl_scale must be >= 0");
  if (!(sigma_init > 0.0)) throw std::invalid_argument("train: sigma_init must be positive");
  if (log_every < 1) throw std::invalid_argument("train: log_every must be >= 1");
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("train: loss weights must be >= 0");
  }
}

ObjectiveEstimate estimate_objective(const physics::LossEvaluator& objective, const model::ScaleMixturePrior& prior,
                                     double kl_scale, const model::VariationalParams& vp,
                                     std::span<const ParamVector> noise) {
  if (noise.empty()) throw std::invalid_argument("estimate_objective: no noise draws");
  const auto P = static_cast<Eigen::Index>(vp.size());
  const ParamVector sigma = vp.sigma();
  const ParamVector dsigma = vp.rho.unaryExpr([](double r) { return model::sigmoid(r); });
  const double inv_s = 1.0 / static_cast<double>(noise.size());
  ObjectiveEstimate est;
  est.gradient = Eigen::VectorXd::Zero(2 * P);
  std::vector<ParamVector> samples;
  samples.reserve(noise.size());
  double weighted = 0.0;
  for (const auto& eps : noise) {
    samples.push_back(model::sample_params(vp, eps));
    const auto e = objective.evaluate(samples.back());
    for (std::size_t c = 0; c < 4; ++c) est.terms[c] += inv_s * e.per_constraint[c];
    weighted += inv_s * e.value;
    // log q(theta) along the reparameterized path depends on rho only
    // through -log(sigma).
    const ParamVector g_mu = e.gradient + kl_scale * prior.neg_log_grad(samples.back());
    est.gradient.head(P) += inv_s * g_mu;
    est.gradient.tail(P) +=
        inv_s * ((g_mu.cwiseProduct(eps) - kl_scale * sigma.cwiseInverse()).cwiseProduct(dsigma));
  }
  est.kl = model::kl_penalty(vp, prior, samples);
  est.total = weighted + kl_scale * est.kl;
  return est;
}

TrainResult train(const TrainConfig& config, const model::Architecture& arch, const physics::VdpProblem& problem,
                  const physics::Dataset& data, const physics::CollocationGrid& grid,
                  const model::ScaleMixturePrior& prior) {
  config.validate();
  arch.validate();
  prior.validate();

  std::vector<physics::ResidualSet> sets;
  for (auto c : physics::kConstraints) sets.push_back(physics::constraint_residuals(c, problem, data, grid));
  const physics::LossEvaluator objective(arch, physics::merge_weighted(sets, config.weights));

  model::Rng rng(config.seed);
  TrainResult result;
  result.params = model::initialize(arch, config.sigma_init, rng);
  auto& vp = result.params;
  const auto P = static_cast<Eigen::Index>(vp.size());

  AdamState adam(2 * P);
  Eigen::VectorXd packed(2 * P);
  packed << vp.mu, vp.rho;
  std::vector<ParamVector> noise(static_cast<std::size_t>(config.mc_samples));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto& eps : noise) eps = model::draw_noise(vp.size(), rng);
    ObjectiveEstimate est;
    try {
      est = estimate_objective(objective, prior, config.kl_scale, vp, noise);
    } catch (const std::runtime_error& err) {
      throw TrainingDiverged(epoch, "physics", err.what());
    }
    for (std::size_t c = 0; c < 4; ++c) {
      if (!std::isfinite(est.terms[c])) {
        throw TrainingDiverged(epoch, std::string(physics::constraint_name(physics::kConstraints[c])), "");
      }
    }
    if (!std::isfinite(est.kl)) throw TrainingDiverged(epoch, "kl", "");
    if (!std::isfinite(est.total) || !est.gradient.allFinite()) {
      throw TrainingDiverged(epoch, "total", "non-finite gradient");
    }
    if (epoch % config.log_every == 0 || epoch + 1 == config.epochs) {
      result.history.records.push_back(
          {epoch, est.terms[0], est.terms[1], est.terms[2], est.terms[3], est.kl, est.total});
    }
    adam_step(adam, packed, est.gradient, config.adam());
    vp.mu = packed.head(P);
    vp.rho = packed.tail(P);
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const LossHistory& history, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!comment.empty()) {
    std::istringstream in(comment);
    for (std::string line; std::getline(in, line);) out << "# " << line << "\n";
  }
  out << "epoch,loss_data,loss_pde,loss_ic,loss_bc,kl,total\n";
  for (const auto& r : history.records) {
    out << r.epoch << "," << fmt(r.data) << "," << fmt(r.pde) << "," << fmt(r.ic) << "," << fmt(r.bc) << ","
        << fmt(r.kl) << "," << fmt(r.total) << "\n";
  }
}

}  // namespace bpinn::training
