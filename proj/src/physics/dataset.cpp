#include "bpinn/physics/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bpinn::physics {

CollocationGrid uniform_grid(double t0, double t1, std::size_t count) {
  if (count < 2) throw std::invalid_argument("uniform_grid: need at least two points");
  CollocationGrid g;
  g.times.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    g.times[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  g.times.back() = t1;
  return g;
}

Placement parse_placement(const std::string& name) {
  if (name == "uniform") return Placement::Uniform;
  if (name == "latin-hypercube") return Placement::LatinHypercube;
  throw std::invalid_argument("unknown data placement '" + name + "' (uniform | latin-hypercube)");
}

std::string placement_name(Placement p) { return p == Placement::Uniform ? "uniform" : "latin-hypercube"; }

Dataset generate_dataset(const VdpProblem& problem, const DenseSolution& reference, std::size_t n_points,
                         double noise_sigma, Placement placement, model::Rng& rng) {
  if (n_points < 1) throw std::invalid_argument("generate_dataset: need at least one point");
  if (noise_sigma < 0.0) throw std::invalid_argument("generate_dataset: noise_sigma must be >= 0");
  Dataset d;
  d.noise_sigma = noise_sigma;
  const std::size_t interior = n_points - 1;
  const double span = problem.bc_time - problem.t0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < interior; ++i) {
    const double cell = span / static_cast<double>(interior);
    const double offset = placement == Placement::Uniform ? 0.0 : unit(rng) * cell;
    const double t = problem.t0 + cell * static_cast<double>(i) + offset;
    d.points.push_back({t, reference.u(t)});
  }
  d.points.push_back({problem.bc_time, problem.bc_value});
  std::sort(d.points.begin(), d.points.end(), [](const DataPoint& a, const DataPoint& b) { return a.t < b.t; });
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& p : d.points) p.u += noise(rng);
  }
  return d;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse(const std::string& s, const std::filesystem::path& path) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::runtime_error(path.string() + ": bad number '" + s + "'");
  }
  return v;
}

void write_comment(std::ostream& os, const std::string& comment) {
  if (comment.empty()) return;
  std::istringstream in(comment);
  for (std::string line; std::getline(in, line);) os << "# " << line << "\n";
}

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_comment(out, comment);
  out << "t,u\n";
  for (const auto& p : data.points) out << fmt(p.t) << "," << fmt(p.u) << "\n";
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Dataset d;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') {
      // noise level recorded by write_dataset_csv callers
      const auto pos = line.find("noise_sigma=");
      if (pos != std::string::npos) d.noise_sigma = std::stod(line.substr(pos + 12));
      continue;
    }
    if (!header) {
      if (line != "t,u") throw std::runtime_error(path.string() + ": expected header 't,u'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    d.points.push_back({parse(line.substr(0, comma), path), parse(line.substr(comma + 1), path)});
  }
  if (!header) throw std::runtime_error(path.string() + ": missing header");
  return d;
}

void write_reference_csv(const std::filesystem::path& path, const DenseSolution& sol, std::size_t count,
                         const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_comment(out, comment);
  out << "t,u,dudt\n";
  const auto grid = uniform_grid(sol.t_begin(), sol.t_end(), count);
  for (double t : grid.times) {
    const auto [u, du] = sol(t);
    out << fmt(t) << "," << fmt(u) << "," << fmt(du) << "\n";
  }
}

}  // namespace bpinn::physics
