#include <malloc.h>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpinn/cli/config.hpp"
#include "bpinn/cli/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bpinn;

namespace {

int run(CLI::App& app, int argc, char** argv) {
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  auto* train = app.add_subcommand("train", "Train the variational network and write a run directory");
  train->add_option("--config", config_path, "Configuration file")->required();
  train->add_option("--out", out_dir, "Output run directory")->required();

  cli::AnalyzeOverrides overrides;
  std::size_t k = 0, workers = 0;
  double eps = 0.0;
  auto* analyze = app.add_subcommand("analyze", "Per-constraint Hessian analysis of a trained checkpoint");
  analyze->add_option("--checkpoint", checkpoint, "checkpoint.txt written by train")->required();
  analyze->add_option("--config", config_path, "Configuration file")->required();
  analyze->add_option("--out", out_dir, "Output directory")->required();
  auto* k_opt = analyze->add_option("--k", k, "Number of top eigenpairs")->check(CLI::PositiveNumber);
  auto* eps_opt = analyze->add_option("--eps", eps, "Relative Tikhonov factor")->check(CLI::PositiveNumber);
  analyze->add_flag("--gn", overrides.gauss_newton, "Use the Gauss-Newton surrogate instead of the exact Hessian");
  auto* workers_opt = analyze->add_option("--workers", workers, "Worker threads (default: available cores)")
                          ->check(CLI::PositiveNumber);

  std::vector<std::string> dirs;
  auto* report = app.add_subcommand("report", "Compare analyzed runs and emit plot-ready tables");
  report->add_option("dirs", dirs, "Analysis directories");
  report->add_option("--out", out_dir, "Report directory")->required();

  auto* presets = app.add_subcommand("presets", "Write the five regime configurations");
  presets->add_option("--out", out_dir, "Directory for <preset>.cfg files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    if (*train) {
      cli::run_train(cli::load_config(config_path), out_dir, std::cout);
    } else if (*analyze) {
      if (*k_opt) overrides.k = k;
      if (*eps_opt) overrides.eps = eps;
      if (*workers_opt) overrides.workers = workers;
      const auto result = cli::run_analyze(checkpoint, cli::load_config(config_path), out_dir, overrides, std::cout);
      if (!result.all_succeeded()) {
        std::cerr << "some constraints could not be analyzed; see metrics.json\n";
        return cli::kExitNumerical;
      }
    } else if (*report) {
      std::vector<fs::path> paths(dirs.begin(), dirs.end());
      cli::run_report(paths, out_dir, std::cout);
    } else if (*presets) {
      fs::create_directories(out_dir);
      for (const auto& name : cli::preset_names()) {
        cli::save_config(fs::path(out_dir) / (name + ".cfg"), cli::preset(name));
      }
    }
  } catch (const cli::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const cli::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitNumerical;
  }
  return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  // The network kernels allocate and free large temporaries every call;
  // keep them on the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Bayesian PINN constraint-hierarchy analysis for the Van der Pol oscillator"};
  app.name("bpinn");
  return run(app, argc, argv);
}
