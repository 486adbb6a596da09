#include "bpinn/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "bpinn/model/checkpoint.hpp"
#include "bpinn/physics/reference.hpp"

namespace bpinn::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kReferenceTol = 1e-10;

std::string provenance(const ExperimentConfig& config) {
  std::ostringstream os;
  os << "config=" << config.name << " config_hash=" << hash_hex(config_hash(config)) << " seed=" << config.seed
     << " analysis_seed=" << config.analysis.seed;
  return os.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::string fixed(double v, int width = 12) {
  std::ostringstream os;
  os << std::setw(width) << std::setprecision(5) << v;
  return os.str();
}

}  // namespace

RunInputs prepare_inputs(const ExperimentConfig& config) {
  config.validate();
  physics::SolverOptions so;
  so.tol = kReferenceTol;
  auto reference = physics::solve_reference(config.problem, so);
  model::Rng rng(config.seed);
  auto data = physics::generate_dataset(config.problem, reference, config.data_points, config.noise_sigma,
                                        config.placement, rng);
  auto grid = physics::uniform_grid(config.problem.t0, config.problem.t1, config.n_collocation);
  return {std::move(reference), std::move(data), std::move(grid)};
}

curvature::AnalysisInputs analysis_inputs(const ExperimentConfig& config, const RunInputs& run) {
  curvature::AnalysisInputs in;
  in.arch = config.architecture();
  in.problem = config.problem;
  in.data = run.data;
  in.grid = run.grid;
  in.weights = config.weights;
  in.prior = config.prior;
  in.prior_weight = config.prior_weight();
  return in;
}

TrainOutcome run_train(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  const auto run = prepare_inputs(config);
  ensure_dir(out);
  const auto tag = provenance(config);
  save_config(out / "config.cfg", config);
  physics::write_dataset_csv(out / "dataset.csv", run.data, tag + " noise_sigma=" + std::to_string(config.noise_sigma));
  physics::write_reference_csv(out / "reference.csv", run.reference, 1000, tag);

  log << "training " << config.name << " (" << config.architecture().param_count() << " parameters, "
      << config.train.epochs << " epochs)\n";
  TrainOutcome outcome;
  try {
    outcome.result = training::train(config.train_config(), config.architecture(), config.problem, run.data, run.grid,
                                     config.prior);
  } catch (const training::TrainingDiverged& e) {
    throw NumericalFailure(std::string("training diverged: ") + e.what());
  }
  training::write_history_csv(out / "loss_history.csv", outcome.result.history, tag);
  outcome.checkpoint = out / "checkpoint.txt";
  model::save_checkpoint(outcome.checkpoint, {config.architecture(), outcome.result.params, config_hash(config)});

  const auto& records = outcome.result.history.records;
  if (!records.empty()) {
    const auto& last = records.back();
    log << "final losses (epoch " << last.epoch << "): data " << last.data << "  pde " << last.pde << "  ic "
        << last.ic << "  bc " << last.bc << "  kl " << last.kl << "  total " << last.total << "\n";
  }
  log << "wrote " << out.string() << "\n";
  return outcome;
}

ExperimentConfig apply_overrides(ExperimentConfig config, const AnalyzeOverrides& overrides) {
  if (overrides.k) config.analysis.k = *overrides.k;
  if (overrides.eps) config.analysis.eps = *overrides.eps;
  if (overrides.gauss_newton) config.analysis.kind = curvature::OperatorKind::GaussNewton;
  config.validate();
  return config;
}

metrics::AnalysisResult run_analyze(const fs::path& checkpoint, const ExperimentConfig& config, const fs::path& out,
                                    const AnalyzeOverrides& overrides, std::ostream& log) {
  const auto effective = apply_overrides(config, overrides);
  if (!fs::is_regular_file(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint.string());
  model::Checkpoint ckpt;
  try {
    ckpt = model::load_checkpoint(checkpoint);
  } catch (const std::exception& e) {
    throw UsageError(std::string("cannot load checkpoint: ") + e.what());
  }
  if (!(ckpt.arch == effective.architecture())) {
    throw UsageError("checkpoint architecture (" + std::to_string(ckpt.arch.hidden_layers) + "x" +
                     std::to_string(ckpt.arch.hidden_width) + ") does not match the config (" +
                     std::to_string(effective.hidden_layers) + "x" + std::to_string(effective.hidden_width) + ")");
  }
  if (ckpt.config_hash != config_hash(config)) {
    log << "warning: checkpoint was trained under config hash " << hash_hex(ckpt.config_hash) << ", analyzing with "
        << hash_hex(config_hash(config)) << "\n";
  }
  const auto run = prepare_inputs(effective);
  ensure_dir(out);

  auto options = effective.analysis_options();
  if (overrides.workers) options.workers = *overrides.workers;
  const curvature::FrozenModel model(analysis_inputs(effective, run), ckpt.params.mu);
  log << "analyzing " << effective.name << " (P=" << model.dim() << ", k=" << options.k
      << ", operator=" << curvature::kind_name(options.kind) << ")\n";
  metrics::AnalysisResult result;
  try {
    result = metrics::analyze(model, options);
  } catch (const std::exception& e) {
    throw NumericalFailure(std::string("analysis of the total Hessian failed: ") + e.what());
  }
  auto& meta = result.table.meta;
  meta.config_name = effective.name;
  meta.config_hash = hash_hex(config_hash(effective));
  meta.seed = effective.seed;

  save_config(out / "analysis_config.cfg", effective);
  curvature::write_spectra_csv(out / "spectra.csv", metrics::labelled_spectra(result), provenance(effective));
  metrics::write_metrics_csv(out / "metrics.csv", result.table);
  metrics::write_metrics_json(out / "metrics.json", result.table);

  log << format_metrics(result.table);
  for (const auto& row : result.table.rows) {
    if (!row.error.empty()) log << "error in " << physics::constraint_name(row.constraint) << ": " << row.error << "\n";
  }
  log << "wrote " << out.string() << "\n";
  return result;
}

std::vector<SpectrumRow> read_spectra_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  std::vector<SpectrumRow> rows;
  bool header = false;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "constraint,rank_index,eigenvalue,residual_norm") {
        throw UsageError(path.string() + ": unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    std::istringstream ls(line);
    SpectrumRow r;
    std::string idx, value, res;
    if (!std::getline(ls, r.label, ',') || !std::getline(ls, idx, ',') || !std::getline(ls, value, ',') ||
        !std::getline(ls, res)) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    try {
      r.rank_index = std::stoul(idx);
      r.eigenvalue = std::stod(value);
      r.residual_norm = std::stod(res);
    } catch (const std::exception&) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
    rows.push_back(std::move(r));
  }
  if (!header) throw UsageError(path.string() + ": missing header");
  return rows;
}

std::string format_metrics(const metrics::MetricsTable& table) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "" << std::right;
  for (const char* h : {"SC", "AS", "VA", "CNR", "rank"}) os << std::setw(12) << h;
  os << "\n";
  for (const auto& r : table.rows) {
    os << std::left << std::setw(6) << physics::constraint_name(r.constraint) << std::right << fixed(r.sc)
       << fixed(r.as) << fixed(r.va) << fixed(r.cnr) << fixed(r.rank);
    if (!r.flags.empty()) {
      os << "  [";
      for (std::size_t i = 0; i < r.flags.size(); ++i) os << (i ? ", " : "") << r.flags[i];
      os << "]";
    }
    os << "\n";
  }
  return os.str();
}

Report run_report(const std::vector<fs::path>& dirs, const fs::path& out, std::ostream& log) {
  if (dirs.empty()) throw UsageError("report needs at least one analysis directory");
  Report report;
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
    ReportRun run;
    run.dir = dir;
    try {
      run.table = metrics::read_metrics_json(dir / "metrics.json");
    } catch (const std::exception& e) {
      throw UsageError(dir.string() + " is not an analysis directory: " + e.what());
    }
    run.spectra = read_spectra_csv(dir / "spectra.csv");
    report.runs.push_back(std::move(run));
  }

  report.k = report.runs.front().table.meta.k;
  bool mixed = false;
  for (const auto& run : report.runs) {
    mixed = mixed || run.table.meta.k != report.k;
    report.k = std::min(report.k, run.table.meta.k);
  }
  if (mixed) report.warnings.push_back("runs use different k; spectra truncated to k=" + std::to_string(report.k));
  std::map<std::string, int> names;
  for (const auto& run : report.runs) {
    if (++names[run.table.meta.config_name] == 2) {
      report.warnings.push_back("config name '" + run.table.meta.config_name + "' appears in more than one run");
    }
  }
  for (const auto& w : report.warnings) log << "warning: " << w << "\n";

  ensure_dir(out);
  auto spectra = open_out(out / "eigenspectra.csv");
  spectra << "config,config_hash,operator,rank_index,eigenvalue\n";
  auto ranks = open_out(out / "ranks.csv");
  ranks << "config,constraint,rank\n";
  auto summary = open_out(out / "summary.csv");
  summary << "config,config_hash,constraint,sc,as,va,cnr,rank\n";
  std::ostringstream text;
  for (const auto& run : report.runs) {
    const auto& meta = run.table.meta;
    for (const auto& row : run.spectra) {
      if (row.rank_index > report.k) continue;
      spectra << meta.config_name << ',' << meta.config_hash << ',' << row.label << ',' << row.rank_index << ','
              << row.eigenvalue << '\n';
    }
    for (const auto& r : run.table.rows) {
      const auto c = physics::constraint_name(r.constraint);
      ranks << meta.config_name << ',' << c << ',' << r.rank << '\n';
      summary << meta.config_name << ',' << meta.config_hash << ',' << c << ',' << r.sc << ',' << r.as << ',' << r.va
              << ',' << r.cnr << ',' << r.rank << '\n';
    }
    text << meta.config_name << " (config_hash " << meta.config_hash << ", seed " << meta.seed << ", k " << meta.k
         << ", operator " << curvature::kind_name(meta.kind) << ")\n";
    const auto top = run.table.diagnostics.find("total.lambda_max");
    if (top != run.table.diagnostics.end()) text << "  top eigenvalue of H_tot: " << top->second << "\n";
    text << format_metrics(run.table) << "\n";
  }
  auto summary_txt = open_out(out / "summary.txt");
  for (const auto& w : report.warnings) summary_txt << "warning: " << w << "\n";
  summary_txt << text.str();
  log << text.str() << "wrote " << out.string() << "\n";
  return report;
}

}  // namespace bpinn::cli
