#include "bpinn/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace bpinn::cli {

namespace {

struct BadValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw BadValue("expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(std::string_view s) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw BadValue("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw BadValue("expected true or false, got '" + std::string(s) + "'");
}

std::string parse_name(std::string_view s) {
  if (s.empty()) throw BadValue("name must not be empty");
  for (char ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) {
      throw BadValue("name may only contain letters, digits, '-', '_' and '.'");
    }
  }
  return std::string(s);
}

template <class F>
auto translating(F&& f, std::string_view s) {
  try {
    return f(std::string(s));
  } catch (const std::invalid_argument& e) {
    throw BadValue(e.what());
  }
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <class Getter>
Field real_at(std::string key, Getter ref) {
  return {std::move(key), [ref](const ExperimentConfig& c) { return format_double(ref(c)); },
          [ref](ExperimentConfig& c, std::string_view s) { ref(c) = parse_double(s); }};
}

template <class Int, class Getter>
Field integer_at(std::string key, Getter ref) {
  return {std::move(key), [ref](const ExperimentConfig& c) { return std::to_string(ref(c)); },
          [ref](ExperimentConfig& c, std::string_view s) { ref(c) = parse_integer<Int>(s); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"name", [](const C& c) { return c.name; }, [](C& c, std::string_view s) { c.name = parse_name(s); }});
    f.push_back(integer_at<std::uint64_t>("seed", [](auto& c) -> auto& { return c.seed; }));
    f.push_back(real_at("problem.mu", [](auto& c) -> auto& { return c.problem.mu; }));
    f.push_back(real_at("problem.t0", [](auto& c) -> auto& { return c.problem.t0; }));
    f.push_back(real_at("problem.t1", [](auto& c) -> auto& { return c.problem.t1; }));
    f.push_back(real_at("problem.u0", [](auto& c) -> auto& { return c.problem.u0; }));
    f.push_back(real_at("problem.du0", [](auto& c) -> auto& { return c.problem.du0; }));
    f.push_back(real_at("problem.bc_time", [](auto& c) -> auto& { return c.problem.bc_time; }));
    f.push_back(real_at("problem.bc_value", [](auto& c) -> auto& { return c.problem.bc_value; }));
    for (auto con : physics::kConstraints) {
      const auto i = static_cast<std::size_t>(con);
      f.push_back(real_at("weights." + std::string(physics::constraint_name(con)),
                          [i](auto& c) -> auto& { return c.weights[i]; }));
    }
    f.push_back(integer_at<int>("model.hidden_layers", [](auto& c) -> auto& { return c.hidden_layers; }));
    f.push_back(integer_at<int>("model.hidden_width", [](auto& c) -> auto& { return c.hidden_width; }));
    f.push_back({"model.normalize_input", [](const C& c) { return std::string(c.normalize_input ? "true" : "false"); },
                 [](C& c, std::string_view s) { c.normalize_input = parse_bool(s); }});
    f.push_back(real_at("prior.sigma1", [](auto& c) -> auto& { return c.prior.sigma1; }));
    f.push_back(real_at("prior.sigma2", [](auto& c) -> auto& { return c.prior.sigma2; }));
    f.push_back(real_at("prior.pi", [](auto& c) -> auto& { return c.prior.pi; }));
    f.push_back(integer_at<std::size_t>("data.n_points", [](auto& c) -> auto& { return c.data_points; }));
    f.push_back(real_at("data.noise_sigma", [](auto& c) -> auto& { return c.noise_sigma; }));
    f.push_back({"data.placement", [](const C& c) { return physics::placement_name(c.placement); },
                 [](C& c, std::string_view s) { c.placement = translating(physics::parse_placement, s); }});
    f.push_back(integer_at<std::size_t>("grid.n_collocation", [](auto& c) -> auto& { return c.n_collocation; }));
    f.push_back(real_at("train.lr", [](auto& c) -> auto& { return c.train.lr; }));
    f.push_back(integer_at<int>("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    f.push_back(integer_at<int>("train.mc_samples", [](auto& c) -> auto& { return c.train.mc_samples; }));
    f.push_back(real_at("train.kl_scale", [](auto& c) -> auto& { return c.train.kl_scale; }));
    f.push_back(real_at("train.beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    f.push_back(real_at("train.beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    f.push_back(real_at("train.adam_eps", [](auto& c) -> auto& { return c.train.adam_eps; }));
    f.push_back(real_at("train.sigma_init", [](auto& c) -> auto& { return c.train.sigma_init; }));
    f.push_back(integer_at<int>("train.log_every", [](auto& c) -> auto& { return c.train.log_every; }));
    f.push_back(integer_at<std::size_t>("analysis.k", [](auto& c) -> auto& { return c.analysis.k; }));
    f.push_back(real_at("analysis.eps", [](auto& c) -> auto& { return c.analysis.eps; }));
    f.push_back(integer_at<std::size_t>("analysis.grid_n", [](auto& c) -> auto& { return c.analysis.grid_n; }));
    f.push_back({"analysis.operator", [](const C& c) { return std::string(curvature::kind_name(c.analysis.kind)); },
                 [](C& c, std::string_view s) {
                   c.analysis.kind = translating([](const std::string& v) { return curvature::parse_kind(v); }, s);
                 }});
    f.push_back({"analysis.sum_mode", [](const C& c) { return std::string(metrics::sum_mode_name(c.analysis.sum_mode)); },
                 [](C& c, std::string_view s) {
                   c.analysis.sum_mode = translating([](const std::string& v) { return metrics::parse_sum_mode(v); }, s);
                 }});
    f.push_back(integer_at<std::size_t>("analysis.lanczos_max_iters",
                                        [](auto& c) -> auto& { return c.analysis.lanczos_max_iters; }));
    f.push_back(real_at("analysis.lanczos_tol", [](auto& c) -> auto& { return c.analysis.lanczos_tol; }));
    f.push_back(integer_at<std::uint64_t>("analysis.seed", [](auto& c) -> auto& { return c.analysis.seed; }));
    return f;
  }();
  return table;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class F>
void collect(std::vector<std::string>& problems, F&& check) {
  try {
    check();
  } catch (const std::exception& e) {
    problems.emplace_back(e.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

model::Architecture ExperimentConfig::architecture() const {
  model::Architecture a;
  a.hidden_layers = hidden_layers;
  a.hidden_width = hidden_width;
  a.normalize_input = normalize_input;
  a.t_max = problem.t1;
  return a;
}

training::TrainConfig ExperimentConfig::train_config() const {
  auto t = train;
  t.weights = weights;
  t.seed = seed + 1;
  return t;
}

metrics::AnalysisOptions ExperimentConfig::analysis_options() const {
  metrics::AnalysisOptions o;
  o.k = analysis.k;
  o.eps_rel = analysis.eps;
  o.grid_n = analysis.grid_n;
  o.kind = analysis.kind;
  o.sum_mode = analysis.sum_mode;
  o.lanczos_max_iters = analysis.lanczos_max_iters;
  o.lanczos_tol = analysis.lanczos_tol;
  o.seed = analysis.seed;
  return o;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> p;
  collect(p, [&] { problem.validate(); });
  collect(p, [&] { architecture().validate(); });
  collect(p, [&] { prior.validate(); });
  collect(p, [&] { train_config().validate(); });
  for (auto c : physics::kConstraints) {
    if (!(weights[static_cast<std::size_t>(c)] >= 0.0)) {
      p.push_back("weights." + std::string(physics::constraint_name(c)) + " must be >= 0");
    }
  }
  if (problem.t0 != 0.0) p.push_back("problem.t0 must be 0 (the network input is scaled by t1)");
  if (data_points < 2) p.push_back("data.n_points must be at least 2");
  if (!(noise_sigma >= 0.0)) p.push_back("data.noise_sigma must be >= 0");
  if (n_collocation < 2) p.push_back("grid.n_collocation must be at least 2");
  if (analysis.k < 1) p.push_back("analysis.k must be at least 1");
  if (!(analysis.eps > 0.0)) p.push_back("analysis.eps must be > 0");
  if (analysis.grid_n < 1) p.push_back("analysis.grid_n must be at least 1");
  if (analysis.lanczos_max_iters < analysis.k) p.push_back("analysis.lanczos_max_iters must be >= analysis.k");
  if (!(analysis.lanczos_tol > 0.0)) p.push_back("analysis.lanczos_tol must be > 0");
  if (!p.empty()) throw ConfigError(std::move(p));
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return serialize_config(*this) == serialize_config(other);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::map<std::string, const Field*, std::less<>> by_key;
  for (const auto& f : fields()) by_key.emplace(f.key, &f);
  std::vector<std::string> problems;
  std::set<std::string, std::less<>> seen;
  std::istringstream in(text);
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back(where + "expected 'key = value', got '" + std::string(line) + "'");
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      problems.push_back(where + "unknown key '" + std::string(key) + "'");
      continue;
    }
    if (!seen.insert(std::string(key)).second) {
      problems.push_back(where + "duplicate key '" + std::string(key) + "'");
      continue;
    }
    try {
      it->second->set(config, value);
    } catch (const BadValue& e) {
      problems.push_back(where + std::string(key) + ": " + e.what());
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# config_hash=" << hash_hex(config_hash(config)) << "\n" << serialize_config(config);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"base", "high-mu", "high-lambda-pde", "low-lambda-pde", "no-bc"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  constexpr auto pde = static_cast<std::size_t>(physics::Constraint::Pde);
  constexpr auto bc = static_cast<std::size_t>(physics::Constraint::Bc);
  if (name == "base") {
  } else if (name == "high-mu") {
    c.problem.mu = 10.0;
  } else if (name == "high-lambda-pde") {
    c.weights[pde] = 10.0;
  } else if (name == "low-lambda-pde") {
    c.weights[pde] = 0.1;
  } else if (name == "no-bc") {
    c.weights[bc] = 0.0;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown preset '" + name + "' (known: " + known + ")");
  }
  return c;
}

}  // namespace bpinn::cli
