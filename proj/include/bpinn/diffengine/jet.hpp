#pragma once

// Second-order Taylor jet in one scalar input t. The component type T is
// either double or ad::Var, so jets compose with grad/hvp over parameters.

#include <cmath>

#include "bpinn/diffengine/tape.hpp"

namespace bpinn::ad {

template <class T>
struct Jet2 {
  T v;   // value
  T d1;  // d/dt
  T d2;  // d^2/dt^2
};

template <class T>
Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2};
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2};
}

template <class T>
Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + 2.0 * (a.d1 * b.d1) + a.v * b.d2};
}

/// Scaling by a t-independent quantity (a weight, a bias-free factor).
template <class T, class S>
Jet2<T> scale(const S& s, const Jet2<T>& a) {
  return {s * a.v, s * a.d1, s * a.d2};
}

template <class T>
Jet2<T> tanh(const Jet2<T>& x) {
  using std::tanh;
  const T y = tanh(x.v);
  const T dy = 1.0 - y * y;
  const T ddy = -2.0 * (y * dy);
  return {y, dy * x.d1, ddy * (x.d1 * x.d1) + dy * x.d2};
}

}  // namespace bpinn::ad
