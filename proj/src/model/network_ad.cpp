#include "bpinn/model/network_ad.hpp"

#include <stdexcept>

namespace bpinn::model {

namespace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

RowMajorMap weights(const ParamVector& p, const LayerSlice& L) {
  return RowMajorMap(p.data() + L.weight_offset, L.out, L.in);
}

Eigen::Map<const Eigen::VectorXd> bias(const ParamVector& p, const LayerSlice& L) {
  return Eigen::Map<const Eigen::VectorXd>(p.data() + L.bias_offset, L.out);
}

// tanh and its first four derivatives at the value channel.
struct TanhDerivs {
  ArrayXXd d1, d2, d3, d4;

  explicit TanhDerivs(const ArrayXXd& zv) {
    const ArrayXXd y = zv.tanh();
    const ArrayXXd y2 = y.square();
    d1 = 1.0 - y2;
    d2 = -2.0 * y * d1;
    d3 = -2.0 * d1 * (1.0 - 3.0 * y2);
    d4 = -2.0 * d2 * (1.0 - 3.0 * y2) + 12.0 * y * d1.square();
  }
};

MatrixXd tanh_jets(const MatrixXd& z, Index n) {
  const ArrayXXd zv = z.leftCols(n).array();
  const ArrayXXd z1 = z.middleCols(n, n).array();
  const ArrayXXd z2 = z.rightCols(n).array();
  const ArrayXXd y = zv.tanh();
  const ArrayXXd d1 = 1.0 - y.square();
  const ArrayXXd d2 = -2.0 * y * d1;
  MatrixXd h(z.rows(), 3 * n);
  h.leftCols(n) = y.matrix();
  h.middleCols(n, n) = (d1 * z1).matrix();
  h.rightCols(n) = (d2 * z1.square() + d1 * z2).matrix();
  return h;
}

MatrixXd tanh_backward(const MatrixXd& z, const MatrixXd& h_bar, Index n) {
  const ArrayXXd z1 = z.middleCols(n, n).array();
  const ArrayXXd z2 = z.rightCols(n).array();
  const TanhDerivs t(z.leftCols(n).array());
  const ArrayXXd bv = h_bar.leftCols(n).array();
  const ArrayXXd b1 = h_bar.middleCols(n, n).array();
  const ArrayXXd b2 = h_bar.rightCols(n).array();
  MatrixXd z_bar(z.rows(), 3 * n);
  z_bar.leftCols(n) = (bv * t.d1 + b1 * t.d2 * z1 + b2 * (t.d3 * z1.square() + t.d2 * z2)).matrix();
  z_bar.middleCols(n, n) = (b1 * t.d1 + 2.0 * b2 * t.d2 * z1).matrix();
  z_bar.rightCols(n) = (b2 * t.d1).matrix();
  return z_bar;
}

MatrixXd tanh_tangent(const MatrixXd& z, const MatrixXd& rz, Index n) {
  const ArrayXXd z1 = z.middleCols(n, n).array();
  const ArrayXXd z2 = z.rightCols(n).array();
  const TanhDerivs t(z.leftCols(n).array());
  const ArrayXXd rv = rz.leftCols(n).array();
  const ArrayXXd r1 = rz.middleCols(n, n).array();
  const ArrayXXd r2 = rz.rightCols(n).array();
  MatrixXd rh(z.rows(), 3 * n);
  rh.leftCols(n) = (t.d1 * rv).matrix();
  rh.middleCols(n, n) = (t.d2 * rv * z1 + t.d1 * r1).matrix();
  rh.rightCols(n) = ((t.d3 * z1.square() + t.d2 * z2) * rv + 2.0 * t.d2 * z1 * r1 + t.d1 * r2).matrix();
  return rh;
}

MatrixXd tanh_backward_tangent(const MatrixXd& z, const MatrixXd& rz, const MatrixXd& h_bar,
                               const MatrixXd& rh_bar, Index n) {
  const ArrayXXd z1 = z.middleCols(n, n).array();
  const ArrayXXd z2 = z.rightCols(n).array();
  const TanhDerivs t(z.leftCols(n).array());
  const ArrayXXd rv = rz.leftCols(n).array();
  const ArrayXXd r1 = rz.middleCols(n, n).array();
  const ArrayXXd r2 = rz.rightCols(n).array();
  const ArrayXXd bv = h_bar.leftCols(n).array();
  const ArrayXXd b1 = h_bar.middleCols(n, n).array();
  const ArrayXXd b2 = h_bar.rightCols(n).array();
  const ArrayXXd rbv = rh_bar.leftCols(n).array();
  const ArrayXXd rb1 = rh_bar.middleCols(n, n).array();
  const ArrayXXd rb2 = rh_bar.rightCols(n).array();
  MatrixXd out(z.rows(), 3 * n);
  out.leftCols(n) = (rbv * t.d1 + bv * t.d2 * rv + rb1 * t.d2 * z1 + b1 * (t.d3 * rv * z1 + t.d2 * r1) +
                     rb2 * (t.d3 * z1.square() + t.d2 * z2) +
                     b2 * (t.d4 * rv * z1.square() + 2.0 * t.d3 * z1 * r1 + t.d3 * rv * z2 + t.d2 * r2))
                        .matrix();
  out.middleCols(n, n) =
      (rb1 * t.d1 + b1 * t.d2 * rv + 2.0 * rb2 * t.d2 * z1 + 2.0 * b2 * (t.d3 * rv * z1 + t.d2 * r1)).matrix();
  out.rightCols(n) = (rb2 * t.d1 + b2 * t.d2 * rv).matrix();
  return out;
}

// Lay a 3 x N jet batch out as the 1 x 3N channel-blocked row.
MatrixXd flatten(const JetBatch& b) {
  const Index n = b.cols();
  MatrixXd row(1, 3 * n);
  for (Index c = 0; c < 3; ++c) row.block(0, c * n, 1, n) = b.row(c);
  return row;
}

JetBatch unflatten(const MatrixXd& row, Index n) {
  JetBatch b(3, n);
  for (Index c = 0; c < 3; ++c) b.row(c) = row.block(0, c * n, 1, n);
  return b;
}

}  // namespace

NetworkBatch::NetworkBatch(Architecture arch, std::vector<double> times)
    : arch_(arch), times_(std::move(times)), slices_(layer_slices(arch)), param_count_(arch.param_count()) {
  if (times_.empty()) throw std::invalid_argument("NetworkBatch: no input times");
}

NetworkBatch::Forward NetworkBatch::forward(const ParamVector& params) const {
  if (static_cast<std::size_t>(params.size()) != param_count_) {
    throw std::invalid_argument("NetworkBatch::forward: parameter length mismatch");
  }
  const Index n = static_cast<Index>(times_.size());
  Forward f;
  MatrixXd input(1, 3 * n);
  for (Index i = 0; i < n; ++i) {
    input(0, i) = arch_.input_scale() * times_[static_cast<std::size_t>(i)] + arch_.input_shift();
  }
  input.block(0, n, 1, n).setConstant(arch_.input_scale());
  input.block(0, 2 * n, 1, n).setZero();
  f.h.push_back(std::move(input));
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const LayerSlice& L = slices_[l];
    MatrixXd z = weights(params, L) * f.h[l];
    z.leftCols(n).colwise() += bias(params, L);
    if (l + 1 < slices_.size()) f.h.push_back(tanh_jets(z, n));
    f.z.push_back(std::move(z));
  }
  f.out = unflatten(f.z.back(), n);
  return f;
}

NetworkBatch::Reverse NetworkBatch::reverse(const Forward& fwd, const ParamVector& params,
                                            const JetBatch& seeds) const {
  const Index n = static_cast<Index>(times_.size());
  Reverse r;
  r.z_bar.resize(slices_.size());
  r.z_bar.back() = flatten(seeds);
  for (std::size_t l = slices_.size() - 1; l > 0; --l) {
    const MatrixXd h_bar = weights(params, slices_[l]).transpose() * r.z_bar[l];
    r.z_bar[l - 1] = tanh_backward(fwd.z[l - 1], h_bar, n);
  }
  return r;
}

ParamVector NetworkBatch::gradient(const Forward& fwd, const Reverse& rev) const {
  const Index n = static_cast<Index>(times_.size());
  ParamVector g(static_cast<Index>(param_count_));
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const LayerSlice& L = slices_[l];
    RowMajorMutMap(g.data() + L.weight_offset, L.out, L.in) = rev.z_bar[l] * fwd.h[l].transpose();
    g.segment(static_cast<Index>(L.bias_offset), L.out) = rev.z_bar[l].leftCols(n).rowwise().sum();
  }
  return g;
}

NetworkBatch::Tangent NetworkBatch::tangent(const Forward& fwd, const ParamVector& params,
                                            const ParamVector& dir) const {
  const Index n = static_cast<Index>(times_.size());
  Tangent t;
  t.rh.push_back(MatrixXd::Zero(1, 3 * n));
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const LayerSlice& L = slices_[l];
    MatrixXd rz = weights(dir, L) * fwd.h[l];
    if (l > 0) rz.noalias() += weights(params, L) * t.rh[l];
    rz.leftCols(n).colwise() += bias(dir, L);
    if (l + 1 < slices_.size()) t.rh.push_back(tanh_tangent(fwd.z[l], rz, n));
    t.rz.push_back(std::move(rz));
  }
  t.out = unflatten(t.rz.back(), n);
  return t;
}

ParamVector NetworkBatch::tangent_backward(const Forward& fwd, const Reverse& rev, const Tangent& tan,
                                           const ParamVector& params, const ParamVector& dir,
                                           const JetBatch& seed_tangents) const {
  const Index n = static_cast<Index>(times_.size());
  ParamVector hv(static_cast<Index>(param_count_));
  MatrixXd rz_bar = flatten(seed_tangents);
  for (std::size_t l = slices_.size(); l-- > 0;) {
    const LayerSlice& L = slices_[l];
    const MatrixXd& z_bar = rev.z_bar[l];
    auto w_block = RowMajorMutMap(hv.data() + L.weight_offset, L.out, L.in);
    w_block = rz_bar * fwd.h[l].transpose();
    if (l > 0) w_block += z_bar * tan.rh[l].transpose();
    hv.segment(static_cast<Index>(L.bias_offset), L.out) = rz_bar.leftCols(n).rowwise().sum();
    if (l == 0) break;
    const MatrixXd h_bar = weights(params, L).transpose() * z_bar;
    MatrixXd rh_bar = weights(dir, L).transpose() * z_bar;
    rh_bar.noalias() += weights(params, L).transpose() * rz_bar;
    rz_bar = tanh_backward_tangent(fwd.z[l - 1], tan.rz[l - 1], h_bar, rh_bar, n);
  }
  return hv;
}

Eigen::MatrixXd NetworkBatch::per_point_gradients(const Forward& fwd, const Reverse& rev) const {
  const Index n = static_cast<Index>(times_.size());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> jac(n, static_cast<Index>(param_count_));
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const LayerSlice& L = slices_[l];
    const MatrixXd& zb = rev.z_bar[l];
    const MatrixXd& h = fwd.h[l];
    for (Index i = 0; i < n; ++i) {
      Eigen::Matrix<double, Eigen::Dynamic, 3> zc(L.out, 3);
      Eigen::Matrix<double, Eigen::Dynamic, 3> hc(L.in, 3);
      for (Index c = 0; c < 3; ++c) {
        zc.col(c) = zb.col(c * n + i);
        hc.col(c) = h.col(c * n + i);
      }
      RowMajorMutMap(jac.row(i).data() + L.weight_offset, L.out, L.in) = zc * hc.transpose();
      jac.row(i).segment(static_cast<Index>(L.bias_offset), L.out) = zb.col(i).transpose();
    }
  }
  return jac;
}

Eigen::MatrixXd output_jacobians(const Architecture& arch, const ParamVector& params,
                                 std::span<const double> times) {
  NetworkBatch net(arch, std::vector<double>(times.begin(), times.end()));
  const auto fwd = net.forward(params);
  JetBatch seeds = JetBatch::Zero(3, static_cast<Index>(times.size()));
  seeds.row(0).setOnes();
  return net.per_point_gradients(fwd, net.reverse(fwd, params, seeds));
}

}  // namespace bpinn::model
