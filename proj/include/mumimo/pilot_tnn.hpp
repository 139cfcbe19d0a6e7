#pragma once

// Pilot designer. The TNN of user k has weight matrix X_bar_k = X_k^T (x) I_N,
// zero bias and identity activation. Only the M_k L complex entries of X_k are
// stored; the tied copies and the structural zeros of X_bar_k exist only
// implicitly, so the tying and zero pattern hold by construction.
//
// Packing: a complex vector v of length n is stored on the tape as the 2n
// reals [Re v; Im v]. The free parameters are the packing of vec(X_k).

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mumimo/mimo_model.hpp"
#include "mumimo/random.hpp"
#include "mumimo/tape.hpp"

namespace mumimo {

inline Vector pack(const ComplexVector& v) {
  Vector out(2 * v.size());
  out.head(v.size()) = v.real();
  out.tail(v.size()) = v.imag();
  return out;
}

inline ComplexVector unpack(const Eigen::Ref<const Vector>& v) {
  if (v.size() % 2 != 0) throw DimensionError("unpack: odd length");
  const Eigen::Index n = v.size() / 2;
  ComplexVector out(n);
  out.real() = v.head(n);
  out.imag() = v.tail(n);
  return out;
}

struct StructuredPilotNet {
  ParamId free_params = 0;  // packed vec(X_k), 2 M_k L x 1
  int antennas = 0;         // M_k
  int pilot_length = 0;     // L
  int bs_antennas = 0;      // N
  double power_budget = 0.0;
};

/// Registers a pilot net initialised with the given pilot matrix.
inline StructuredPilotNet make_pilot_net(ParameterStore& store, int user, const ComplexMatrix& pilot,
                                         int bs_antennas, double power_budget) {
  StructuredPilotNet net;
  net.antennas = static_cast<int>(pilot.rows());
  net.pilot_length = static_cast<int>(pilot.cols());
  net.bs_antennas = bs_antennas;
  net.power_budget = power_budget;
  net.free_params = store.add("pilot" + std::to_string(user), pack(vec(pilot)));
  return net;
}

/// Random CN(0,1) entries rescaled to energy fill * p_k.
inline ComplexMatrix random_pilot(int antennas, int pilot_length, double power_budget, Rng& rng,
                                  double fill = 0.9) {
  ComplexNormal normal;
  ComplexMatrix x(antennas, pilot_length);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal(rng);
  const double e = x.squaredNorm();
  if (e > 0.0) x *= std::sqrt(fill * power_budget / e);
  return x;
}

/// X_k read back from the free parameters (inverse of vec).
inline ComplexMatrix read_pilot(const ParameterStore& store, const StructuredPilotNet& net) {
  return unvec(unpack(store.value(net.free_params).col(0)), net.antennas, net.pilot_length);
}

inline std::vector<ComplexMatrix> read_designed_pilots(const ParameterStore& store,
                                                       std::span<const StructuredPilotNet> nets) {
  std::vector<ComplexMatrix> out;
  for (const auto& n : nets) out.push_back(read_pilot(store, n));
  return out;
}

/// Dense X_bar_k, for inspection and cross-checks only.
inline ComplexMatrix materialize(const ParameterStore& store, const StructuredPilotNet& net) {
  return expand_pilot(read_pilot(store, net), net.bs_antennas);
}

namespace detail {

/// y = vec(H X) per column, with h = vec(H) (N x M) and X (M x L), all packed.
/// This is X_bar h evaluated with O(N M L) work instead of O(N^2 M L).
inline Matrix pilot_apply(const Vector& x_packed, const Matrix& h, int n, int m, int l) {
  const Eigen::Index ml = static_cast<Eigen::Index>(m) * l;
  const Eigen::Index nm = static_cast<Eigen::Index>(n) * m;
  const Eigen::Index nl = static_cast<Eigen::Index>(n) * l;
  if (h.rows() != 2 * nm) throw DimensionError("pilot_apply: channel block has the wrong length");
  Eigen::Map<const Matrix> xr(x_packed.data(), m, l);
  Eigen::Map<const Matrix> xi(x_packed.data() + ml, m, l);
  Matrix y(2 * nl, h.cols());
  for (Eigen::Index b = 0; b < h.cols(); ++b) {
    Eigen::Map<const Matrix> hr(h.col(b).data(), n, m);
    Eigen::Map<const Matrix> hi(h.col(b).data() + nm, n, m);
    Eigen::Map<Matrix> yr(y.col(b).data(), n, l);
    Eigen::Map<Matrix> yi(y.col(b).data() + nl, n, l);
    yr.noalias() = hr * xr;
    yr.noalias() -= hi * xi;
    yi.noalias() = hr * xi;
    yi.noalias() += hi * xr;
  }
  return y;
}

}  // namespace detail

/// y_tilde_k = X_bar_k h_k for a batch of packed channel columns. The
/// backward pass folds the N tied positions of each free entry into one
/// gradient and also propagates into h (needed on the cancellation path).
inline Var tnn_forward(const StructuredPilotNet& net, Var h, Tape& tape) {
  const int n = net.bs_antennas;
  const int m = net.antennas;
  const int l = net.pilot_length;
  const Var x = tape.parameter(net.free_params);
  if (tape.value(h).rows() != 2 * n * m)
    throw DimensionError("tnn_forward: expected channel of length " + std::to_string(n * m));
  Matrix out = detail::pilot_apply(tape.value(x).col(0), tape.value(h), n, m, l);
  return tape.record(std::move(out), {x, h}, [x, h, n, m, l](Tape& t, const Matrix& g) {
    const Eigen::Index ml = static_cast<Eigen::Index>(m) * l;
    const Eigen::Index nm = static_cast<Eigen::Index>(n) * m;
    const Eigen::Index nl = static_cast<Eigen::Index>(n) * l;
    const Matrix& xv = t.value(x);
    const Matrix& hv = t.value(h);
    Eigen::Map<const Matrix> xr(xv.data(), m, l);
    Eigen::Map<const Matrix> xi(xv.data() + ml, m, l);
    Matrix& gx = t.grad_of(x);
    Matrix& gh = t.grad_of(h);
    Eigen::Map<Matrix> gxr(gx.data(), m, l);
    Eigen::Map<Matrix> gxi(gx.data() + ml, m, l);
    for (Eigen::Index b = 0; b < hv.cols(); ++b) {
      Eigen::Map<const Matrix> hr(hv.col(b).data(), n, m);
      Eigen::Map<const Matrix> hi(hv.col(b).data() + nm, n, m);
      Eigen::Map<const Matrix> gr(g.col(b).data(), n, l);
      Eigen::Map<const Matrix> gi(g.col(b).data() + nl, n, l);
      gxr.noalias() += hr.transpose() * gr;
      gxr.noalias() += hi.transpose() * gi;
      gxi.noalias() += hr.transpose() * gi;
      gxi.noalias() -= hi.transpose() * gr;
      Eigen::Map<Matrix> ghr(gh.col(b).data(), n, m);
      Eigen::Map<Matrix> ghi(gh.col(b).data() + nm, n, m);
      ghr.noalias() += gr * xr.transpose();
      ghr.noalias() += gi * xi.transpose();
      ghi.noalias() += gi * xr.transpose();
      ghi.noalias() -= gr * xi.transpose();
    }
  });
}

/// y = sum_k y_tilde_k + z.
inline Var superpose(std::span<const Var> outputs, Var noise, Tape& tape) {
  Var acc = noise;
  for (Var o : outputs) acc = tape.add(acc, o);
  return acc;
}

/// Euclidean projection onto {v : ||v||^2 <= budget}.
inline Vector project_onto_ball(const Vector& u, double budget) {
  const double sq = u.squaredNorm();
  if (sq <= budget) return u;
  Vector v = (std::sqrt(budget) / std::sqrt(sq)) * u;
  // Rounding can leave ||v||^2 one ulp above the budget.
  while (v.squaredNorm() > budget) v *= std::nextafter(1.0, 0.0);
  return v;
}

/// x_bar <- P(x_bar - step * gradient), gradient in packed (re, im) form.
inline void project_power(ParameterStore& store, const StructuredPilotNet& net,
                          const Vector& gradient, double step_size) {
  Matrix& x = store.value(net.free_params);
  if (gradient.size() != x.rows())
    throw DimensionError("project_power: gradient length " + std::to_string(gradient.size()) +
                         " != " + std::to_string(x.rows()));
  const Vector u = x.col(0) - step_size * gradient;
  x.col(0) = project_onto_ball(u, net.power_budget);
}

/// Same update with the gradient given as complex numbers dJ/dRe + j dJ/dIm.
inline void project_power(ParameterStore& store, const StructuredPilotNet& net,
                          const ComplexVector& gradient, double step_size) {
  project_power(store, net, pack(gradient), step_size);
}

}  // namespace mumimo
