#include "bpinn/model/architecture.hpp"

#include <stdexcept>

namespace bpinn::model {

void Architecture::validate() const {
  if (hidden_layers < 0) throw std::invalid_argument("architecture: hidden_layers must be >= 0");
  if (hidden_layers > 0 && hidden_width < 1) throw std::invalid_argument("architecture: hidden_width must be >= 1");
  if (!(t_max > 0.0)) throw std::invalid_argument("architecture: t_max must be positive");
}

std::vector<int> Architecture::widths() const {
  std::vector<int> w{1};
  for (int i = 0; i < hidden_layers; ++i) w.push_back(hidden_width);
  w.push_back(1);
  return w;
}

std::vector<LayerSlice> layer_slices(const Architecture& arch) {
  const auto w = arch.widths();
  std::vector<LayerSlice> slices;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    LayerSlice s{};
    s.in = w[l];
    s.out = w[l + 1];
    s.weight_offset = offset;
    offset += static_cast<std::size_t>(s.in) * static_cast<std::size_t>(s.out);
    s.bias_offset = offset;
    offset += static_cast<std::size_t>(s.out);
    slices.push_back(s);
  }
  return slices;
}

std::size_t Architecture::param_count() const {
  const auto slices = layer_slices(*this);
  return slices.back().bias_offset + static_cast<std::size_t>(slices.back().out);
}

double forward(const Architecture& arch, const ParamVector& params, double t) {
  if (static_cast<std::size_t>(params.size()) != arch.param_count()) {
    throw std::invalid_argument("forward: parameter length mismatch");
  }
  return forward<double>(arch, std::span<const double>(params.data(), static_cast<std::size_t>(params.size())), t);
}

}  // namespace bpinn::model
