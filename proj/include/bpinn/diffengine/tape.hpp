#pragma once

// Scalar reverse-mode tape with a forward tangent carried on every node.
//
// Each node stores its value, its directional tangent, the local partials
// with respect to its (at most two) operands and the tangents of those
// partials. A reverse sweep therefore yields both the gradient and, when
// the leaf tangents hold a direction v, the Hessian-vector product H v
// (forward-over-reverse nesting).
//
// Supported primitives: add, mul, neg, tanh, reciprocal, square, exp, log.
// Adding a primitive means adding its value rule, partial, partial tangent
// and a finite-difference conformance test in tests/diffengine_test.cpp.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace bpinn {

/// Flat vector of all trainable scalars. Gradients, HVPs and eigenvectors
/// share its layout.
using ParamVector = Eigen::VectorXd;

namespace ad {

enum class Op : std::uint8_t { Leaf, Add, Mul, Neg, Tanh, Reciprocal, Square, Exp, Log };

std::string_view op_name(Op op);

/// Raised when a node produced a non-finite value.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::size_t node, Op op, double value);
  std::size_t node() const { return node_; }
  Op op() const { return op_; }

 private:
  std::size_t node_;
  Op op_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape
/// lives and has not been cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  double value() const;
  double tangent() const;
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node. `tangent` is the direction component for HVPs.
  Var variable(double value, double tangent = 0.0);
  Var constant(double value) { return variable(value, 0.0); }

  Var unary(Op op, Var a);
  Var binary(Op op, Var a, Var b);

  std::size_t size() const { return nodes_.size(); }
  double value(std::uint32_t i) const { return nodes_[i].value; }
  double tangent(std::uint32_t i) const { return nodes_[i].tangent; }

  /// Throws NonFiniteError for the first non-finite node, if any.
  void check_finite() const;

  struct Adjoints {
    std::vector<double> adjoint;          // d output / d node
    std::vector<double> adjoint_tangent;  // directional derivative of the above
  };

  /// Reverse sweep seeded with d output / d output = 1.
  Adjoints reverse(Var output) const;

  void clear();

 private:
  struct Node {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    double value;
    double tangent;
    double pa;   // d node / d a
    double pb;   // d node / d b
    double dpa;  // tangent of pa
    double dpb;  // tangent of pb
  };

  Var push(const Node& node);

  std::vector<Node> nodes_;
  std::size_t first_nonfinite_ = static_cast<std::size_t>(-1);
};

inline double Var::value() const { return tape_->value(index_); }
inline double Var::tangent() const { return tape_->tangent(index_); }

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var& operator+=(Var& a, Var b);
Var& operator-=(Var& a, Var b);
Var& operator*=(Var& a, Var b);

Var tanh(Var x);
Var square(Var x);
Var reciprocal(Var x);
Var exp(Var x);
Var log(Var x);

/// square() for plain doubles so templated code can call it unqualified.
inline double square(double x) { return x * x; }

/// A scalar function built on the tape from the parameter leaves.
using TapeFunction = std::function<Var(std::span<const Var>)>;

double value(const TapeFunction& f, std::span<const double> at);

/// Reverse-mode gradient.
ParamVector grad(const TapeFunction& f, std::span<const double> at);

/// Exact Hessian-vector product by forward-over-reverse nesting.
ParamVector hvp(const TapeFunction& f, std::span<const double> at, std::span<const double> v);

inline std::span<const double> as_span(const ParamVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace ad
}  // namespace bpinn
