#pragma once

// SIC-chained channel estimator. Stage s estimates user order[s] from
//
//   y_hat = y - sum_{earlier stages i} X_bar_i h_hat_i
//
// with a fully connected ReLU network (identity output layer). Cancellation
// uses the live pilot parameters, so the loss reaches the pilots through
// both the transmission and the cancellation terms.

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mumimo/dense.hpp"
#include "mumimo/pilot_tnn.hpp"

namespace mumimo {

struct EstimatorNet {
  std::vector<DenseLayer> layers;  // hidden ReLU layers, then the identity output
  int input_width = 0;             // 2 N L
  int output_width = 0;            // 2 N M_k
  int user = 0;
};

inline EstimatorNet make_estimator_net(ParameterStore& store, int user, int bs_antennas,
                                       int pilot_length, int antennas, int hidden_layers,
                                       int hidden_width, Rng& rng) {
  if (hidden_layers < 0 || (hidden_layers > 0 && hidden_width < 1))
    throw DimensionError("estimator needs hidden_layers >= 0 and hidden_width >= 1");
  EstimatorNet net;
  net.user = user;
  net.input_width = 2 * bs_antennas * pilot_length;
  net.output_width = 2 * bs_antennas * antennas;
  const std::string prefix = "dnn" + std::to_string(user);
  Eigen::Index in = net.input_width;
  for (int v = 0; v < hidden_layers; ++v) {
    net.layers.push_back(make_dense(store, prefix + ".hidden" + std::to_string(v), in, hidden_width,
                                    Activation::Relu, rng));
    in = hidden_width;
  }
  net.layers.push_back(make_dense(store, prefix + ".out", in, net.output_width,
                                  Activation::Identity, rng));
  return net;
}

/// h_hat_k for a batch of packed inputs (columns of length 2 N L).
inline Var dnn_estimate(const EstimatorNet& net, Var y_hat, Tape& tape) {
  if (tape.value(y_hat).rows() != net.input_width)
    throw DimensionError("dnn_estimate: input has " + std::to_string(tape.value(y_hat).rows()) +
                         " rows, network expects " + std::to_string(net.input_width));
  Var x = y_hat;
  for (const auto& layer : net.layers) x = forward_dense(layer, x, tape);
  return x;
}

/// y minus the reconstructed contributions of already-estimated users.
/// `pilots` and `estimates` are paired; an empty list returns y unchanged.
inline Var sic_input(Var y, std::span<const StructuredPilotNet> pilots,
                     std::span<const Var> estimates, Tape& tape) {
  if (pilots.size() != estimates.size())
    throw std::invalid_argument("sic_input: every cancelled user needs an estimate");
  Var residual = y;
  for (std::size_t i = 0; i < pilots.size(); ++i)
    residual = tape.sub(residual, tnn_forward(pilots[i], estimates[i], tape));
  return residual;
}

struct SicOutput {
  std::vector<Var> estimates;  // indexed by user
  std::vector<Var> residuals;  // indexed by stage: input of the network at that stage
};

inline std::vector<int> identity_order(int users) {
  std::vector<int> order(users);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

inline SicOutput estimate_all(std::span<const EstimatorNet> nets,
                              std::span<const StructuredPilotNet> pilots, Var y,
                              std::span<const int> order, Tape& tape) {
  const std::size_t k = nets.size();
  if (pilots.size() != k || order.size() != k)
    throw DimensionError("estimate_all: nets, pilots and order must all have K entries");
  std::vector<bool> seen(k, false);
  for (int u : order) {
    if (u < 0 || static_cast<std::size_t>(u) >= k || seen[u])
      throw std::invalid_argument("estimate_all: order is not a permutation of the users");
    seen[u] = true;
  }

  SicOutput out;
  out.estimates.resize(k);
  std::vector<StructuredPilotNet> done_pilots;
  std::vector<Var> done_estimates;
  for (int u : order) {
    const Var residual = sic_input(y, done_pilots, done_estimates, tape);
    out.residuals.push_back(residual);
    out.estimates[u] = dnn_estimate(nets[u], residual, tape);
    done_pilots.push_back(pilots[u]);
    done_estimates.push_back(out.estimates[u]);
  }
  return out;
}

}  // namespace mumimo
