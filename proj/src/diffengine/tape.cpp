#include "bpinn/diffengine/tape.hpp"

#include <cmath>
#include <sstream>

namespace bpinn::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Neg: return "neg";
    case Op::Tanh: return "tanh";
    case Op::Reciprocal: return "reciprocal";
    case Op::Square: return "square";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
  }
  return "unknown";
}

namespace {

std::string describe(std::size_t node, Op op, double value) {
  std::ostringstream os;
  os << "non-finite value " << value << " at tape node " << node << " (" << op_name(op) << ")";
  return os.str();
}

}  // namespace

NonFiniteError::NonFiniteError(std::size_t node, Op op, double value)
    : std::runtime_error(describe(node, op, value)), node_(node), op_(op) {}

Var Tape::push(const Node& node) {
  if (first_nonfinite_ == static_cast<std::size_t>(-1) && !std::isfinite(node.value)) {
    first_nonfinite_ = nodes_.size();
  }
  nodes_.push_back(node);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::variable(double value, double tangent) {
  return push(Node{Op::Leaf, 0, 0, value, tangent, 0.0, 0.0, 0.0, 0.0});
}

Var Tape::unary(Op op, Var a) {
  const double x = nodes_[a.index()].value;
  const double tx = nodes_[a.index()].tangent;
  Node n{op, a.index(), a.index(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  switch (op) {
    case Op::Neg:
      n.value = -x;
      n.pa = -1.0;
      break;
    case Op::Tanh: {
      const double y = std::tanh(x);
      n.value = y;
      n.pa = 1.0 - y * y;
      n.dpa = -2.0 * y * n.pa * tx;
      break;
    }
    case Op::Reciprocal: {
      const double y = 1.0 / x;
      n.value = y;
      n.pa = -y * y;
      n.dpa = 2.0 * y * y * y * tx;
      break;
    }
    case Op::Square:
      n.value = x * x;
      n.pa = 2.0 * x;
      n.dpa = 2.0 * tx;
      break;
    case Op::Exp: {
      const double y = std::exp(x);
      n.value = y;
      n.pa = y;
      n.dpa = y * tx;
      break;
    }
    case Op::Log:
      n.value = std::log(x);
      n.pa = 1.0 / x;
      n.dpa = -tx / (x * x);
      break;
    default:
      throw std::logic_error("Tape::unary: not a unary op");
  }
  n.tangent = n.pa * tx;
  return push(n);
}

Var Tape::binary(Op op, Var a, Var b) {
  const Node& na = nodes_[a.index()];
  const Node& nb = nodes_[b.index()];
  Node n{op, a.index(), b.index(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  switch (op) {
    case Op::Add:
      n.value = na.value + nb.value;
      n.pa = 1.0;
      n.pb = 1.0;
      break;
    case Op::Mul:
      n.value = na.value * nb.value;
      n.pa = nb.value;
      n.pb = na.value;
      n.dpa = nb.tangent;
      n.dpb = na.tangent;
      break;
    default:
      throw std::logic_error("Tape::binary: not a binary op");
  }
  n.tangent = n.pa * na.tangent + n.pb * nb.tangent;
  return push(n);
}

void Tape::check_finite() const {
  if (first_nonfinite_ != static_cast<std::size_t>(-1)) {
    const Node& n = nodes_[first_nonfinite_];
    throw NonFiniteError(first_nonfinite_, n.op, n.value);
  }
}

Tape::Adjoints Tape::reverse(Var output) const {
  check_finite();
  Adjoints adj;
  adj.adjoint.assign(nodes_.size(), 0.0);
  adj.adjoint_tangent.assign(nodes_.size(), 0.0);
  adj.adjoint[output.index()] = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.op == Op::Leaf) continue;
    const double g = adj.adjoint[i];
    const double gt = adj.adjoint_tangent[i];
    if (g == 0.0 && gt == 0.0) continue;
    adj.adjoint[node.a] += g * node.pa;
    adj.adjoint_tangent[node.a] += gt * node.pa + g * node.dpa;
    if (node.op == Op::Add || node.op == Op::Mul) {
      adj.adjoint[node.b] += g * node.pb;
      adj.adjoint_tangent[node.b] += gt * node.pb + g * node.dpb;
    }
  }
  return adj;
}

void Tape::clear() {
  nodes_.clear();
  first_nonfinite_ = static_cast<std::size_t>(-1);
}

Var operator+(Var a, Var b) { return a.tape()->binary(Op::Add, a, b); }
Var operator*(Var a, Var b) { return a.tape()->binary(Op::Mul, a, b); }
Var operator-(Var a) { return a.tape()->unary(Op::Neg, a); }
Var operator-(Var a, Var b) { return a + (-b); }
Var operator/(Var a, Var b) { return a * reciprocal(b); }
Var operator+(Var a, double b) { return a + a.tape()->constant(b); }
Var operator+(double a, Var b) { return b.tape()->constant(a) + b; }
Var operator-(Var a, double b) { return a + a.tape()->constant(-b); }
Var operator-(double a, Var b) { return b.tape()->constant(a) + (-b); }
Var operator*(Var a, double b) { return a * a.tape()->constant(b); }
Var operator*(double a, Var b) { return b.tape()->constant(a) * b; }
Var operator/(Var a, double b) { return a * a.tape()->constant(1.0 / b); }
Var operator/(double a, Var b) { return b.tape()->constant(a) * reciprocal(b); }
Var& operator+=(Var& a, Var b) { return a = a + b; }
Var& operator-=(Var& a, Var b) { return a = a - b; }
Var& operator*=(Var& a, Var b) { return a = a * b; }

Var tanh(Var x) { return x.tape()->unary(Op::Tanh, x); }
Var square(Var x) { return x.tape()->unary(Op::Square, x); }
Var reciprocal(Var x) { return x.tape()->unary(Op::Reciprocal, x); }
Var exp(Var x) { return x.tape()->unary(Op::Exp, x); }
Var log(Var x) { return x.tape()->unary(Op::Log, x); }

namespace {

struct Recorded {
  Tape tape;
  std::vector<Var> leaves;
  Var out;
};

void record(Recorded& r, const TapeFunction& f, std::span<const double> at, std::span<const double> v) {
  r.leaves.reserve(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    r.leaves.push_back(r.tape.variable(at[i], v.empty() ? 0.0 : v[i]));
  }
  r.out = f(std::span<const Var>(r.leaves));
  r.tape.check_finite();
}

}  // namespace

double value(const TapeFunction& f, std::span<const double> at) {
  Recorded r;
  record(r, f, at, {});
  return r.out.value();
}

ParamVector grad(const TapeFunction& f, std::span<const double> at) {
  Recorded r;
  record(r, f, at, {});
  const auto adj = r.tape.reverse(r.out);
  ParamVector g(static_cast<Eigen::Index>(at.size()));
  for (std::size_t i = 0; i < at.size(); ++i) g[static_cast<Eigen::Index>(i)] = adj.adjoint[r.leaves[i].index()];
  return g;
}

ParamVector hvp(const TapeFunction& f, std::span<const double> at, std::span<const double> v) {
  if (v.size() != at.size()) throw std::invalid_argument("hvp: direction length differs from parameter length");
  Recorded r;
  record(r, f, at, v);
  const auto adj = r.tape.reverse(r.out);
  ParamVector hv(static_cast<Eigen::Index>(at.size()));
  for (std::size_t i = 0; i < at.size(); ++i) {
    hv[static_cast<Eigen::Index>(i)] = adj.adjoint_tangent[r.leaves[i].index()];
  }
  return hv;
}

}  // namespace bpinn::ad
