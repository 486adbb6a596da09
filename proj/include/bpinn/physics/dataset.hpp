#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bpinn/model/variational.hpp"
#include "bpinn/physics/problem.hpp"
#include "bpinn/physics/reference.hpp"

namespace bpinn::physics {

struct DataPoint {
  double t;
  double u;
};

struct Dataset {
  std::vector<DataPoint> points;
  double noise_sigma = 0.0;
};

struct CollocationGrid {
  std::vector<double> times;
};

/// `count` equally spaced times on [t0, t1], endpoints included.
CollocationGrid uniform_grid(double t0, double t1, std::size_t count);

enum class Placement { Uniform, LatinHypercube };

Placement parse_placement(const std::string& name);
std::string placement_name(Placement p);

/// n - 1 times in [t0, bc_time) (uniformly spaced, or one per stratum for
/// latin-hypercube) with values from the reference solution, plus the
/// endpoint (bc_time, bc_value). Every value receives N(0, noise_sigma^2)
/// noise. Points are sorted by time.
Dataset generate_dataset(const VdpProblem& problem, const DenseSolution& reference, std::size_t n_points,
                         double noise_sigma, Placement placement, model::Rng& rng);

/// CSV with header `t,u`. Lines starting with '#' are comments.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data, const std::string& comment = {});
Dataset read_dataset_csv(const std::filesystem::path& path);

/// CSV `t,u,dudt` on `count` equally spaced points of the solution span.
void write_reference_csv(const std::filesystem::path& path, const DenseSolution& sol, std::size_t count = 1000,
                         const std::string& comment = {});

}  // namespace bpinn::physics
