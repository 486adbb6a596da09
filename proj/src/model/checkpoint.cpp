#include "bpinn/model/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bpinn::model {

namespace {

std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::runtime_error("checkpoint: bad number '" + s + "'");
  return v;
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  std::string line() {
    std::string l;
    if (!std::getline(in_, l)) throw std::runtime_error("checkpoint: unexpected end of file");
    ++line_no_;
    return l;
  }

  std::string field(const std::string& key) {
    const std::string l = line();
    const auto sp = l.find(' ');
    if (sp == std::string::npos || l.substr(0, sp) != key) {
      throw std::runtime_error("checkpoint: expected '" + key + "' at line " + std::to_string(line_no_));
    }
    return l.substr(sp + 1);
  }

  void expect(const std::string& s) {
    if (line() != s) throw std::runtime_error("checkpoint: expected '" + s + "' at line " + std::to_string(line_no_));
  }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream os;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016" PRIx64, c.config_hash);
  os << "bpinn-checkpoint 1\n"
     << "hidden_layers " << c.arch.hidden_layers << "\n"
     << "hidden_width " << c.arch.hidden_width << "\n"
     << "normalize_input " << (c.arch.normalize_input ? 1 : 0) << "\n"
     << "t_max " << hexfloat(c.arch.t_max) << "\n"
     << "input_scale " << hexfloat(c.arch.input_scale()) << "\n"
     << "input_shift " << hexfloat(c.arch.input_shift()) << "\n"
     << "config_hash " << hash << "\n"
     << "param_count " << c.params.mu.size() << "\n";
  os << "mu\n";
  for (Eigen::Index i = 0; i < c.params.mu.size(); ++i) os << hexfloat(c.params.mu[i]) << "\n";
  os << "rho\n";
  for (Eigen::Index i = 0; i < c.params.rho.size(); ++i) os << hexfloat(c.params.rho[i]) << "\n";
  os << "end\n";
  return os.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  Reader r(text);
  r.expect("bpinn-checkpoint 1");
  Checkpoint c;
  c.arch.hidden_layers = std::stoi(r.field("hidden_layers"));
  c.arch.hidden_width = std::stoi(r.field("hidden_width"));
  c.arch.normalize_input = std::stoi(r.field("normalize_input")) != 0;
  c.arch.t_max = parse_double(r.field("t_max"));
  const double scale = parse_double(r.field("input_scale"));
  const double shift = parse_double(r.field("input_shift"));
  c.arch.validate();
  if (scale != c.arch.input_scale() || shift != c.arch.input_shift()) {
    throw std::runtime_error("checkpoint: stored input normalization disagrees with t_max/normalize_input");
  }
  c.config_hash = std::strtoull(r.field("config_hash").c_str(), nullptr, 16);
  const long n = std::stol(r.field("param_count"));
  if (n < 0 || static_cast<std::size_t>(n) != c.arch.param_count()) {
    throw std::runtime_error("checkpoint: param_count does not match the architecture");
  }
  c.params.mu.resize(n);
  c.params.rho.resize(n);
  r.expect("mu");
  for (long i = 0; i < n; ++i) c.params.mu[i] = parse_double(r.line());
  r.expect("rho");
  for (long i = 0; i < n; ++i) c.params.rho[i] = parse_double(r.line());
  r.expect("end");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(ckpt);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace bpinn::model
