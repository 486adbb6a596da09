#pragma once

// Layer-batched derivatives of the network over a fixed set of input times.
//
// Every quantity is held as a (width x 3N) matrix whose column blocks are
// the value, d/dt and d2/dt2 channels of N input times. A forward pass, a
// reverse pass seeded with adjoints of (u, u', u''), and Pearlmutter's
// R-operator (a parameter-space tangent pushed through the forward pass and
// then overlaid on the reverse pass) give gradients and exact Hessian-vector
// products at GEMM speed. The scalar tape in diffengine computes the same
// quantities generically and serves as the reference in tests.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "bpinn/diffengine/tape.hpp"
#include "bpinn/model/architecture.hpp"

namespace bpinn::model {

/// Rows: u, du/dt, d2u/dt2. Columns: input times.
using JetBatch = Eigen::Matrix<double, 3, Eigen::Dynamic>;

class NetworkBatch {
 public:
  NetworkBatch(Architecture arch, std::vector<double> times);

  struct Forward {
    std::vector<Eigen::MatrixXd> z;  // pre-activations per layer, width x 3N
    std::vector<Eigen::MatrixXd> h;  // input of each layer; h[0] is the input jet
    JetBatch out;
  };

  /// Adjoints of every pre-activation for a given seed of the outputs.
  struct Reverse {
    std::vector<Eigen::MatrixXd> z_bar;
  };

  struct Tangent {
    std::vector<Eigen::MatrixXd> rz;
    std::vector<Eigen::MatrixXd> rh;
    JetBatch out;
  };

  Forward forward(const ParamVector& params) const;

  /// Reverse sweep for the scalar sum_n sum_c seeds(c, n) * out(c, n).
  Reverse reverse(const Forward& fwd, const ParamVector& params, const JetBatch& seeds) const;

  /// Parameter gradient of the seeded scalar.
  ParamVector gradient(const Forward& fwd, const Reverse& rev) const;

  /// Directional derivative of the forward pass along `dir`.
  Tangent tangent(const Forward& fwd, const ParamVector& params, const ParamVector& dir) const;

  /// Directional derivative of gradient() along `dir`, where the seeds move
  /// with derivative `seed_tangents`. With seeds = dL/dout and
  /// seed_tangents = (d2L/dout2) * tan.out this is the Hessian-vector product.
  ParamVector tangent_backward(const Forward& fwd, const Reverse& rev, const Tangent& tan,
                               const ParamVector& params, const ParamVector& dir,
                               const JetBatch& seed_tangents) const;

  /// Row n is the gradient of sum_c seeds(c, n) * out(c, n). Shape N x P.
  Eigen::MatrixXd per_point_gradients(const Forward& fwd, const Reverse& rev) const;

  const Architecture& architecture() const { return arch_; }
  const std::vector<double>& times() const { return times_; }
  std::size_t size() const { return times_.size(); }
  std::size_t param_count() const { return param_count_; }

 private:
  Architecture arch_;
  std::vector<double> times_;
  std::vector<LayerSlice> slices_;
  std::size_t param_count_;
};

/// Gradient of u(x) with respect to the parameters at each x. Shape N x P.
Eigen::MatrixXd output_jacobians(const Architecture& arch, const ParamVector& params,
                                 std::span<const double> times);

}  // namespace bpinn::model
