#pragma once

#include <cmath>
#include <random>
#include <string>

#include "mumimo/random.hpp"
#include "mumimo/tape.hpp"

namespace mumimo {

enum class Activation { Relu, Identity };

/// activation(W x + b). The arrays live in a ParameterStore.
struct DenseLayer {
  ParamId weight = 0;
  ParamId bias = 0;
  Activation activation = Activation::Identity;
};

/// Uniform on +-sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_out, fan_in);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  return w;
}

inline DenseLayer make_dense(ParameterStore& store, const std::string& name, Eigen::Index in,
                             Eigen::Index out, Activation activation, Rng& rng) {
  DenseLayer layer;
  layer.weight = store.add(name + ".weight", glorot_uniform(out, in, rng));
  layer.bias = store.add(name + ".bias", Matrix::Zero(out, 1));
  layer.activation = activation;
  return layer;
}

inline Var forward_dense(const DenseLayer& layer, Var input, Tape& tape) {
  const Var w = tape.parameter(layer.weight);
  const Var b = tape.parameter(layer.bias);
  const Var pre = tape.affine(w, input, b);
  return layer.activation == Activation::Relu ? tape.relu(pre) : pre;
}

/// theta <- theta - step * g for every parameter in `grads`. Aborts with the
/// step index and parameter name when a gradient is not finite.
inline void sgd_step(ParameterStore& store, const GradientMap& grads, double step_size,
                     long long step_index = -1) {
  for (const auto& [id, g] : grads.entries()) {
    if (!g.allFinite())
      throw NumericalError("non-finite gradient for '" + store.name(id) + "' at step " +
                           std::to_string(step_index));
    Matrix& value = store.value(id);
    if (value.rows() != g.rows() || value.cols() != g.cols())
      throw DimensionError("sgd_step: gradient shape differs for '" + store.name(id) + "'");
  }
  for (const auto& [id, g] : grads.entries()) store.value(id) -= step_size * g;
}

}  // namespace mumimo
