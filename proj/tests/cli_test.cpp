#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "bpinn/cli/config.hpp"
#include "bpinn/cli/pipeline.hpp"
#include "bpinn/model/checkpoint.hpp"
#include "test_support.hpp"

namespace bpinn {
namespace {

namespace fs = std::filesystem;
using cli::ExperimentConfig;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("bpinn_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ExperimentConfig tiny_config() {
  auto c = cli::preset("base");
  c.name = "tiny";
  c.hidden_layers = 1;
  c.hidden_width = 8;
  c.data_points = 6;
  c.n_collocation = 15;
  c.train.epochs = 60;
  c.analysis.k = 5;
  c.analysis.grid_n = 50;
  c.analysis.lanczos_tol = 1e-10;
  return c;
}

TEST(Config, PresetsMatchTheRegimes) {
  EXPECT_EQ(cli::preset_names().size(), 5u);
  const auto base = cli::preset("base");
  EXPECT_EQ(base.problem.mu, 1.0);
  EXPECT_EQ(base.weights, (std::array<double, 4>{1, 1, 1, 1}));
  EXPECT_EQ(base.hidden_layers, 3);
  EXPECT_EQ(base.hidden_width, 50);
  EXPECT_EQ(base.data_points, 20u);
  EXPECT_EQ(base.n_collocation, 500u);
  EXPECT_EQ(base.train.lr, 1e-3);
  EXPECT_EQ(base.train.epochs, 2000);
  EXPECT_EQ(base.train.mc_samples, 5);
  EXPECT_EQ(base.train.kl_scale, 1e-3);
  EXPECT_EQ(base.prior.sigma1, 0.1);
  EXPECT_EQ(base.prior.sigma2, 0.1);
  EXPECT_EQ(base.prior.pi, 0.5);
  EXPECT_EQ(base.analysis.k, 20u);
  EXPECT_EQ(base.analysis.eps, 1e-6);
  EXPECT_EQ(base.analysis.grid_n, 500u);
  EXPECT_EQ(cli::preset("high-mu").problem.mu, 10.0);
  EXPECT_EQ(cli::preset("high-lambda-pde").weights, (std::array<double, 4>{1, 10, 1, 1}));
  EXPECT_EQ(cli::preset("low-lambda-pde").weights, (std::array<double, 4>{1, 0.1, 1, 1}));
  EXPECT_EQ(cli::preset("no-bc").weights, (std::array<double, 4>{1, 1, 1, 0}));
  for (const auto& name : cli::preset_names()) EXPECT_EQ(cli::preset(name).seed, base.seed);
  EXPECT_THROW(cli::preset("medium-mu"), std::invalid_argument);
}

TEST(Config, PresetsRoundTrip) {
  for (const auto& name : cli::preset_names()) {
    const auto c = cli::preset(name);
    const auto text = cli::serialize_config(c);
    const auto back = cli::parse_config(text);
    EXPECT_EQ(back, c) << name;
    EXPECT_EQ(cli::serialize_config(back), text) << name;
  }
}

TEST(Config, AwkwardDoublesRoundTrip) {
  auto c = cli::preset("base");
  c.weights[1] = 0.1 + 0.2;
  c.train.lr = 1.0 / 3.0;
  c.noise_sigma = 5e-324;
  const auto back = cli::parse_config(cli::serialize_config(c));
  EXPECT_EQ(back.weights[1], c.weights[1]);
  EXPECT_EQ(back.train.lr, c.train.lr);
  EXPECT_EQ(back.noise_sigma, c.noise_sigma);
}

TEST(Config, PartialFilesKeepDefaults) {
  const auto c = cli::parse_config("# high damping\nname = custom\n\nproblem.mu = 3.5\n  weights.ic=2  \n");
  EXPECT_EQ(c.name, "custom");
  EXPECT_EQ(c.problem.mu, 3.5);
  EXPECT_EQ(c.weights[2], 2.0);
  EXPECT_EQ(c.weights[0], 1.0);
  EXPECT_EQ(c.train.epochs, 2000);
}

TEST(Config, EveryProblemIsReported) {
  try {
    cli::parse_config(
        "problem.mu = fast\n"
        "weights.pde = 1\n"
        "weigths.bc = 0\n"
        "weights.pde = 2\n"
        "just some words\n"
        "analysis.operator = hessian\n");
    FAIL() << "expected ConfigError";
  } catch (const cli::ConfigError& e) {
    const auto& p = e.problems();
    ASSERT_EQ(p.size(), 5u);
    EXPECT_NE(p[0].find("line 1: problem.mu"), std::string::npos);
    EXPECT_NE(p[1].find("line 3: unknown key 'weigths.bc'"), std::string::npos);
    EXPECT_NE(p[2].find("line 4: duplicate key 'weights.pde'"), std::string::npos);
    EXPECT_NE(p[3].find("line 5"), std::string::npos);
    EXPECT_NE(p[4].find("line 6: analysis.operator"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("weigths.bc"), std::string::npos);
  }
}

TEST(Config, SemanticValidation) {
  try {
    cli::parse_config("weights.bc = -1\nanalysis.k = 0\ntrain.lr = 0\ndata.n_points = 1\n");
    FAIL() << "expected ConfigError";
  } catch (const cli::ConfigError& e) {
    EXPECT_GE(e.problems().size(), 4u);
    const std::string all = e.what();
    EXPECT_NE(all.find("weights.bc"), std::string::npos);
    EXPECT_NE(all.find("analysis.k"), std::string::npos);
    EXPECT_NE(all.find("data.n_points"), std::string::npos);
  }
}

TEST(Config, HashIsStableAndSensitive) {
  const auto base = cli::preset("base");
  EXPECT_EQ(cli::config_hash(base), cli::config_hash(cli::preset("base")));
  EXPECT_EQ(cli::hash_hex(cli::config_hash(base)).size(), 16u);
  std::set<std::uint64_t> hashes;
  for (const auto& name : cli::preset_names()) hashes.insert(cli::config_hash(cli::preset(name)));
  EXPECT_EQ(hashes.size(), 5u);
  auto tweaked = base;
  tweaked.analysis.seed = 1;
  EXPECT_NE(cli::config_hash(tweaked), cli::config_hash(base));
  EXPECT_EQ(cli::hash_hex(0xcbf29ce484222325ULL), "cbf29ce484222325");
}

TEST(Config, SavedFileLoadsBack) {
  TempDir dir("cfg");
  const auto c = cli::preset("no-bc");
  cli::save_config(dir.path() / "no-bc.cfg", c);
  EXPECT_EQ(cli::load_config(dir.path() / "no-bc.cfg"), c);
  EXPECT_NE(read_file(dir.path() / "no-bc.cfg").find(cli::hash_hex(cli::config_hash(c))), std::string::npos);
  EXPECT_THROW(cli::load_config(dir.path() / "missing.cfg"), std::runtime_error);
}

TEST(Config, EveryKeyIsSerialized) {
  const auto text = cli::serialize_config(cli::preset("base"));
  for (const auto& key : cli::config_keys()) EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    std::ostringstream log;
    cli::run_train(tiny_config(), dir_->path() / "run", log);
    cli::run_analyze(dir_->path() / "run" / "checkpoint.txt", tiny_config(), dir_->path() / "run", {}, log);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path run_dir() { return dir_->path() / "run"; }
  static fs::path scratch() { return dir_->path(); }

  static TempDir* dir_;
};

TempDir* Pipeline::dir_ = nullptr;

TEST_F(Pipeline, TrainWritesTheRunDirectory) {
  for (const char* f : {"config.cfg", "checkpoint.txt", "dataset.csv", "reference.csv", "loss_history.csv"}) {
    EXPECT_TRUE(fs::is_regular_file(run_dir() / f)) << f;
  }
  const auto hash = cli::hash_hex(cli::config_hash(tiny_config()));
  for (const char* f : {"config.cfg", "dataset.csv", "reference.csv", "loss_history.csv"}) {
    const auto text = read_file(run_dir() / f);
    EXPECT_NE(text.find(hash), std::string::npos) << f;
  }
  for (const char* f : {"dataset.csv", "reference.csv", "loss_history.csv"}) {
    EXPECT_NE(read_file(run_dir() / f).find("seed=1234"), std::string::npos) << f;
  }
  EXPECT_EQ(cli::load_config(run_dir() / "config.cfg"), tiny_config());
  EXPECT_EQ(model::load_checkpoint(run_dir() / "checkpoint.txt").config_hash, cli::config_hash(tiny_config()));
}

TEST_F(Pipeline, TrainingIsReproducible) {
  std::ostringstream log;
  cli::run_train(tiny_config(), scratch() / "again", log);
  EXPECT_EQ(read_file(scratch() / "again" / "checkpoint.txt"), read_file(run_dir() / "checkpoint.txt"));
  EXPECT_EQ(read_file(scratch() / "again" / "loss_history.csv"), read_file(run_dir() / "loss_history.csv"));
}

TEST_F(Pipeline, ZeroEpochsKeepsTheInitialization) {
  auto c = tiny_config();
  c.train.epochs = 0;
  std::ostringstream log;
  const auto outcome = cli::run_train(c, scratch() / "zero", log);
  model::Rng rng(c.train_config().seed);
  const auto init = model::initialize(c.architecture(), c.train.sigma_init, rng);
  const auto ckpt = model::load_checkpoint(outcome.checkpoint);
  EXPECT_EQ(ckpt.params.mu, init.mu);
  EXPECT_EQ(ckpt.params.rho, init.rho);
}

TEST_F(Pipeline, TrainingLowersTheObjective) {
  auto c = tiny_config();
  c.train.epochs = 400;
  std::ostringstream log;
  const auto outcome = cli::run_train(c, scratch() / "longer", log);
  const auto& r = outcome.result.history.records;
  ASSERT_GE(r.size(), 2u);
  EXPECT_LT(r.back().total, r.front().total);
  EXPECT_NE(log.str().find("final losses"), std::string::npos);
}

TEST_F(Pipeline, AnalyzeWritesMetricsAndSpectra) {
  for (const char* f : {"analysis_config.cfg", "spectra.csv", "metrics.csv", "metrics.json"}) {
    EXPECT_TRUE(fs::is_regular_file(run_dir() / f)) << f;
  }
  const auto table = metrics::read_metrics_json(run_dir() / "metrics.json");
  EXPECT_EQ(table.meta.config_name, "tiny");
  EXPECT_EQ(table.meta.config_hash, cli::hash_hex(cli::config_hash(tiny_config())));
  EXPECT_EQ(table.meta.seed, 1234u);
  EXPECT_EQ(table.meta.k, 5u);
  EXPECT_EQ(table.meta.parameters, 25u);
  const auto spectra = cli::read_spectra_csv(run_dir() / "spectra.csv");
  EXPECT_EQ(spectra.size(), 25u);
  EXPECT_NE(read_file(run_dir() / "spectra.csv").find(table.meta.config_hash), std::string::npos);
  EXPECT_NE(read_file(run_dir() / "metrics.csv").find(table.meta.config_hash), std::string::npos);
}

TEST_F(Pipeline, AnalyzeMatchesDenseOracle) {
  const auto c = tiny_config();
  const auto run = cli::prepare_inputs(c);
  testing::TinySetup s{cli::analysis_inputs(c, run), model::load_checkpoint(run_dir() / "checkpoint.txt").params.mu};
  const auto dense = testing::dense_metrics(s, false, c.analysis.k, c.analysis.eps, c.analysis.grid_n);
  const auto table = metrics::read_metrics_json(run_dir() / "metrics.json");
  for (auto con : physics::kConstraints) {
    const auto i = static_cast<std::size_t>(con);
    const auto& row = table.row(con);
    EXPECT_LT(testing::rel_err(row.sc, dense.sc[i]), 1e-6) << physics::constraint_name(con);
    EXPECT_LT(testing::rel_err(row.as, dense.as[i]), 1e-6) << physics::constraint_name(con);
    EXPECT_LT(testing::rel_err(row.va, dense.va[i]), 1e-6) << physics::constraint_name(con);
    EXPECT_LT(testing::rel_err(row.cnr, dense.cnr[i]), 1e-6) << physics::constraint_name(con);
  }
}

TEST_F(Pipeline, AnalyzeIsDeterministicAndLeavesTheCheckpointAlone) {
  const auto ckpt = run_dir() / "checkpoint.txt";
  const auto before = read_file(ckpt);
  const auto stamp = fs::last_write_time(ckpt);
  std::ostringstream log;
  cli::run_analyze(ckpt, tiny_config(), scratch() / "again_analysis", {}, log);
  EXPECT_EQ(read_file(ckpt), before);
  EXPECT_EQ(fs::last_write_time(ckpt), stamp);
  for (const char* f : {"spectra.csv", "metrics.csv"}) {
    EXPECT_EQ(read_file(scratch() / "again_analysis" / f), read_file(run_dir() / f)) << f;
  }
}

TEST_F(Pipeline, OverridesAreRecorded) {
  cli::AnalyzeOverrides o;
  o.k = 3;
  o.eps = 1e-4;
  o.gauss_newton = true;
  o.workers = 2;
  std::ostringstream log;
  const auto result = cli::run_analyze(run_dir() / "checkpoint.txt", tiny_config(), scratch() / "gn", o, log);
  EXPECT_EQ(result.table.meta.k, 3u);
  EXPECT_EQ(result.table.meta.eps, 1e-4);
  EXPECT_EQ(result.table.meta.kind, curvature::OperatorKind::GaussNewton);
  const auto effective = cli::load_config(scratch() / "gn" / "analysis_config.cfg");
  EXPECT_EQ(effective.analysis.k, 3u);
  EXPECT_EQ(result.table.meta.config_hash, cli::hash_hex(cli::config_hash(effective)));
  for (const auto& row : result.table.rows) EXPECT_GE(row.va, 0.0);
}

TEST_F(Pipeline, ArchitectureMismatchIsAUsageError) {
  auto c = tiny_config();
  c.hidden_width = 9;
  std::ostringstream log;
  EXPECT_THROW(cli::run_analyze(run_dir() / "checkpoint.txt", c, scratch() / "bad", {}, log), cli::UsageError);
  EXPECT_THROW(cli::run_analyze(scratch() / "nope.txt", tiny_config(), scratch() / "bad", {}, log), cli::UsageError);
}

TEST_F(Pipeline, ZeroWeightConstraintIsStillMeasured) {
  auto c = tiny_config();
  c.name = "tiny-no-bc";
  c.weights[3] = 0.0;
  std::ostringstream log;
  cli::run_train(c, scratch() / "nobc", log);
  const auto r = cli::run_analyze(scratch() / "nobc" / "checkpoint.txt", c, scratch() / "nobc", {}, log);
  const auto& bc = r.table.row(physics::Constraint::Bc);
  for (double v : {bc.sc, bc.as, bc.va, bc.cnr}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NE(v, 0.0);
  }
}

TEST_F(Pipeline, SingleRunReportEqualsItsTable) {
  std::ostringstream log;
  const auto report = cli::run_report({run_dir()}, scratch() / "report1", log);
  ASSERT_EQ(report.runs.size(), 1u);
  EXPECT_TRUE(report.warnings.empty());
  const auto table = metrics::read_metrics_json(run_dir() / "metrics.json");
  std::ifstream in(scratch() / "report1" / "summary.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config,config_hash,constraint,sc,as,va,cnr,rank");
  for (const auto& row : table.rows) {
    std::getline(in, line);
    std::ostringstream expect;
    expect.precision(17);
    expect << "tiny," << table.meta.config_hash << ',' << physics::constraint_name(row.constraint) << ',' << row.sc
           << ',' << row.as << ',' << row.va << ',' << row.cnr << ',' << row.rank;
    EXPECT_EQ(line, expect.str());
  }
  EXPECT_NE(read_file(scratch() / "report1" / "summary.txt").find(cli::format_metrics(table)), std::string::npos);
}

TEST_F(Pipeline, MixedKIsTruncatedWithAWarning) {
  cli::AnalyzeOverrides o;
  o.k = 3;
  std::ostringstream log;
  cli::run_analyze(run_dir() / "checkpoint.txt", tiny_config(), scratch() / "k3", o, log);
  const auto report = cli::run_report({run_dir(), scratch() / "k3"}, scratch() / "report2", log);
  EXPECT_EQ(report.k, 3u);
  ASSERT_FALSE(report.warnings.empty());
  EXPECT_NE(report.warnings.front().find("k=3"), std::string::npos);
  std::ifstream in(scratch() / "report2" / "eigenspectra.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config,config_hash,operator,rank_index,eigenvalue");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2u * 5u * 3u);
}

TEST(Report, RejectsEmptyOrForeignInput) {
  TempDir dir("report");
  std::ostringstream log;
  EXPECT_THROW(cli::run_report({}, dir.path() / "out", log), cli::UsageError);
  EXPECT_THROW(cli::run_report({dir.path()}, dir.path() / "out", log), cli::UsageError);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(BPINN_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Executable, ExitCodes) {
  TempDir dir("exe");
  const auto d = dir.path().string();
  EXPECT_EQ(run_cli(""), cli::kExitUsage);
  EXPECT_EQ(run_cli("--help"), cli::kExitOk);
  EXPECT_EQ(run_cli("report --out " + d + "/r"), cli::kExitUsage);
  EXPECT_EQ(run_cli("train --out " + d + "/t"), cli::kExitUsage);
  EXPECT_EQ(run_cli("presets --out " + d + "/cfg"), cli::kExitOk);
  EXPECT_TRUE(fs::is_regular_file(dir.path() / "cfg" / "high-mu.cfg"));
  std::ofstream(dir.path() / "typo.cfg") << "problem.muu = 2\n";
  EXPECT_EQ(run_cli("train --config " + d + "/typo.cfg --out " + d + "/t"), cli::kExitUsage);
  std::ofstream(dir.path() / "diverge.cfg") << "model.hidden_layers = 1\nmodel.hidden_width = 4\n"
                                               "train.epochs = 20\ntrain.lr = 1e300\n";
  EXPECT_EQ(run_cli("train --config " + d + "/diverge.cfg --out " + d + "/t"), cli::kExitNumerical);
  EXPECT_EQ(run_cli("analyze --checkpoint " + d + "/missing.txt --config " + d + "/cfg/base.cfg --out " + d + "/a"),
            cli::kExitUsage);
}

}  // namespace
}  // namespace bpinn
