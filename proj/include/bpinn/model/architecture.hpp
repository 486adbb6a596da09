#pragma once

// Fully connected tanh network u(t) with a scalar input and output.
//
// Parameter layout: for each layer in order, the weight matrix
// (out x in, row-major) followed by the bias vector.

#include <cstddef>
#include <span>
#include <vector>

#include "bpinn/diffengine/jet.hpp"

namespace bpinn::model {

struct Architecture {
  int hidden_layers = 3;
  int hidden_width = 50;
  bool normalize_input = true;
  /// Right end of the input interval; with normalization t maps to 2t/t_max - 1.
  double t_max = 7.0;

  double input_scale() const { return normalize_input ? 2.0 / t_max : 1.0; }
  double input_shift() const { return normalize_input ? -1.0 : 0.0; }

  void validate() const;
  std::size_t param_count() const;
  std::vector<int> widths() const;  // {1, w, ..., w, 1}
  bool operator==(const Architecture&) const = default;
};

struct LayerSlice {
  std::size_t weight_offset;
  std::size_t bias_offset;
  int in;
  int out;
};

std::vector<LayerSlice> layer_slices(const Architecture& arch);

/// (u, du/dt, d2u/dt2) at t. T = double or ad::Var.
template <class T>
ad::Jet2<T> eval_with_input_jets(const Architecture& arch, std::span<const T> params, double t) {
  const auto slices = layer_slices(arch);
  std::vector<ad::Jet2<T>> h;
  std::vector<ad::Jet2<T>> z;
  const double s = arch.input_scale() * t + arch.input_shift();
  for (std::size_t l = 0; l < slices.size(); ++l) {
    const LayerSlice& L = slices[l];
    z.clear();
    z.reserve(static_cast<std::size_t>(L.out));
    for (int i = 0; i < L.out; ++i) {
      const T& b = params[L.bias_offset + static_cast<std::size_t>(i)];
      if (l == 0) {
        // input jet is (s, ds/dt, 0)
        const T& w = params[L.weight_offset + static_cast<std::size_t>(i)];
        z.push_back({w * s + b, w * arch.input_scale(), 0.0 * w});
        continue;
      }
      const std::size_t row = L.weight_offset + static_cast<std::size_t>(i) * static_cast<std::size_t>(L.in);
      ad::Jet2<T> acc{b, 0.0 * b, 0.0 * b};
      for (int j = 0; j < L.in; ++j) {
        const T& w = params[row + static_cast<std::size_t>(j)];
        const auto& hj = h[static_cast<std::size_t>(j)];
        acc.v = acc.v + w * hj.v;
        acc.d1 = acc.d1 + w * hj.d1;
        acc.d2 = acc.d2 + w * hj.d2;
      }
      z.push_back(acc);
    }
    if (l + 1 == slices.size()) return z.front();
    h.clear();
    for (const auto& zi : z) h.push_back(ad::tanh(zi));
  }
  return z.front();
}

template <class T>
T forward(const Architecture& arch, std::span<const T> params, double t) {
  return eval_with_input_jets(arch, params, t).v;
}

double forward(const Architecture& arch, const ParamVector& params, double t);

}  // namespace bpinn::model
