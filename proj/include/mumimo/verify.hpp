#pragma once

// Fast self-check suite: each property compares an implementation path
// against an independent oracle (direct definitions, finite differences,
// brute-force search, Monte Carlo).

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mumimo/lmmse.hpp"
#include "mumimo/mimo_model.hpp"
#include "mumimo/pilot_tnn.hpp"
#include "mumimo/sic_estimator.hpp"
#include "mumimo/trainer.hpp"

namespace mumimo {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::size_t mc_samples = 10'000;
  bool corrupt_tying = false;  // fault injection for the tying property
  std::uint64_t seed = 2024;
};

/// Monte-Carlo tolerance: 2% at 10^5 samples, scaled by sqrt(10^5 / n).
inline double monte_carlo_tolerance(std::size_t samples) {
  return 0.02 * std::sqrt(1e5 / static_cast<double>(samples));
}

inline ComplexMatrix random_complex(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  ComplexNormal normal;
  ComplexMatrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Largest violation of the tied-diagonal / structural-zero pattern of
/// X_bar = X^T (x) I_N; zero when the pattern holds exactly.
inline double tying_violation(const ComplexMatrix& expanded, int bs_antennas) {
  const Eigen::Index n = bs_antennas;
  double worst = 0.0;
  for (Eigen::Index r = 0; r < expanded.rows(); ++r)
    for (Eigen::Index c = 0; c < expanded.cols(); ++c) {
      const Eigen::Index l = r / n, i = r % n, m = c / n, j = c % n;
      if (i != j)
        worst = std::max(worst, std::abs(expanded(r, c)));
      else
        worst = std::max(worst, std::abs(expanded(r, c) - expanded(l * n, m * n)));
    }
  return worst;
}

/// Central finite differences of the batch loss with respect to every
/// parameter scalar, compared against the tape gradient. Returns the largest
/// |a - f| / max(|a|, |f|, floor).
inline double gradient_check_error(JointModel& model, const Batch& batch, double step = 1e-5,
                                   double floor = 1e-6) {
  const BatchResult analytic = batch_loss(model, batch, static_cast<int>(batch.size()), 1, true);
  double worst = 0.0;
  for (ParamId id = 0; id < model.params.size(); ++id) {
    Matrix& value = model.params.value(id);
    const Matrix a = analytic.grads.contains(id) ? analytic.grads.at(id)
                                                 : Matrix::Zero(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value(i);
      value(i) = saved + step;
      const double up = batch_loss(model, batch, static_cast<int>(batch.size()), 1, false).loss;
      value(i) = saved - step;
      const double down = batch_loss(model, batch, static_cast<int>(batch.size()), 1, false).loss;
      value(i) = saved;
      const double fd = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(a(i)), std::abs(fd), floor});
      worst = std::max(worst, std::abs(a(i) - fd) / denom);
    }
  }
  return worst;
}

/// Smallest |pre-activation| over every ReLU in one forward pass.
inline double relu_margin(const JointModel& model, const Batch& batch) {
  Tape tape(model.params);
  record_forward(model, batch, 1.0, tape);
  double margin = std::numeric_limits<double>::infinity();
  for (Var v : tape.relu_inputs()) margin = std::min(margin, tape.value(v).cwiseAbs().minCoeff());
  return margin;
}

/// K = 2, N = 2, M_k = 1, L = 2, two hidden layers of width 8. Draws until
/// every ReLU pre-activation is at least `margin` away from its kink.
struct GradientCheckInstance {
  SystemConfig system;
  JointModel model;
  Batch batch;
};

inline GradientCheckInstance make_gradient_check_instance(std::uint64_t seed, double margin = 1e-3,
                                                          Eigen::Index samples = 4) {
  GradientCheckInstance inst;
  inst.system = SystemConfig::make(2, {1, 1}, 2, {1.0, 0.5}, 0.05);
  TrainConfig cfg;
  cfg.hidden_layers = 2;
  cfg.hidden_width = 8;
  cfg.snr_offsets_db.clear();
  for (std::uint64_t attempt = 0;; ++attempt) {
    cfg.seed = seed + attempt;
    inst.model = make_model(inst.system, cfg);
    // Non-zero biases so bias gradients are exercised away from symmetric points.
    Rng rng = make_rng(cfg.seed, Stream::Verify, 1);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (const auto& net : inst.model.estimators)
      for (const auto& layer : net.layers)
        for (Eigen::Index i = 0; i < inst.model.params.value(layer.bias).size(); ++i)
          inst.model.params.value(layer.bias)(i) = u(rng);
    ChannelSampler sampler(inst.system, identity_covariances(inst.system));
    Rng data = make_rng(cfg.seed, Stream::Verify, 2);
    inst.batch = sample_batch(inst.system, sampler, data, samples);
    if (relu_margin(inst.model, inst.batch) >= margin) return inst;
  }
}

/// Dense oracle for the pilot gradient: differentiate through the full real
/// representation of X_bar, then fold the tied positions into X entries.
inline Vector folded_dense_pilot_gradient(const ComplexMatrix& pilot, int bs_antennas,
                                          const Matrix& channels, const Matrix& output_grad) {
  const ComplexMatrix xbar = expand_pilot(pilot, bs_antennas);
  const Eigen::Index r = xbar.rows(), c = xbar.cols();
  // Real form [[A, -B], [B, A]] acting on [Re h; Im h].
  Matrix dense(2 * r, 2 * c);
  dense << xbar.real(), -xbar.imag(), xbar.imag(), xbar.real();
  ParameterStore store;
  const ParamId w = store.add("dense", dense);
  const ParamId b = store.add("zero_bias", Matrix::Zero(2 * r, 1));
  Tape tape(store);
  const Var out = tape.affine(tape.parameter(w), tape.constant(channels), tape.parameter(b));
  const Var loss = tape.weighted_sum(out, output_grad);
  const GradientMap grads = tape.backward(loss);
  const Matrix& gd = grads.at(w);
  const Eigen::Index m = pilot.rows(), l = pilot.cols(), n = bs_antennas;
  Vector folded(2 * m * l);
  for (Eigen::Index col = 0; col < l; ++col)
    for (Eigen::Index row = 0; row < m; ++row) {
      double gre = 0.0, gim = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index rr = col * n + i, cc = row * n + i;
        // A = Re X_bar enters at (rr, cc) and (r + rr, c + cc); B = Im X_bar at
        // (r + rr, cc) and, negated, at (rr, c + cc).
        gre += gd(rr, cc) + gd(r + rr, c + cc);
        gim += gd(r + rr, cc) - gd(rr, c + cc);
      }
      folded(col * m + row) = gre;
      folded(m * l + col * m + row) = gim;
    }
  return folded;
}

inline PropertyResult check_vectorization_identity(const VerifyOptions& opt) {
  Rng rng = make_rng(opt.seed, Stream::Verify, 10);
  std::uniform_int_distribution<int> dim(1, 4), users(1, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = users(rng);
    std::vector<int> m(k);
    for (auto& v : m) v = dim(rng);
    const int n = dim(rng), l = dim(rng);
    const auto cfg = SystemConfig::make(n, m, l, std::vector<double>(k, 1.0), 0.1);
    std::vector<ComplexMatrix> pilots;
    for (int u = 0; u < k; ++u) pilots.push_back(random_complex(m[u], cfg.pilot_length, rng));
    const auto channel = sample_channel(cfg, identity_covariances(cfg), rng());
    const auto rx = simulate_reception(pilots, channel, cfg, rng());
    const double err = (vec(rx.matrix_form) - rx.vector_form).norm() / std::max(1e-300, rx.vector_form.norm());
    worst = std::max(worst, err);
  }
  std::ostringstream d;
  d << "max relative error " << worst << " over 100 instances (tol 1e-12)";
  return {"vectorization_identity", worst <= 1e-12, d.str()};
}

inline PropertyResult check_pilot_energy(const VerifyOptions& opt) {
  Rng rng = make_rng(opt.seed, Stream::Verify, 11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ComplexMatrix x = random_complex(1 + trial % 4, 1 + trial % 7, rng);
    double loop = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) loop += std::norm(x(i, j));
    const double trace = (x * x.adjoint()).trace().real();
    worst = std::max({worst, std::abs(pilot_energy(x) - loop) / loop, std::abs(trace - loop) / loop});
  }
  std::ostringstream d;
  d << "max relative error " << worst << " (tol 1e-13)";
  return {"pilot_energy_identity", worst <= 1e-13, d.str()};
}

inline PropertyResult check_tying(const VerifyOptions& opt) {
  Rng rng = make_rng(opt.seed, Stream::Verify, 12);
  double structure = 0.0, expansion = 0.0, grad_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 3, m = 1 + trial % 4, l = 1 + (trial * 7) % 5;
    ParameterStore store;
    const auto net = make_pilot_net(store, 0, random_complex(m, l, rng), n, 1.0);
    ComplexMatrix dense = materialize(store, net);
    if (opt.corrupt_tying && dense.rows() > 1 && dense.cols() > 1) dense(1, 1) += Complex(1e-3, 0.0);
    structure = std::max(structure, tying_violation(dense, n));
    expansion = std::max(expansion, (dense - expand_pilot(read_pilot(store, net), n)).cwiseAbs().maxCoeff());

    Matrix h(2 * n * m, 3);
    Matrix g(2 * n * l, 3);
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = std::normal_distribution<double>()(rng);
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = std::normal_distribution<double>()(rng);
    Tape tape(store);
    const Var out = tnn_forward(net, tape.constant(h), tape);
    const Var loss = tape.weighted_sum(out, g);
    const Vector structured = tape.backward(loss).at(net.free_params).col(0);
    const Vector folded = folded_dense_pilot_gradient(read_pilot(store, net), n, h, g);
    grad_err = std::max(grad_err, (structured - folded).cwiseAbs().maxCoeff() /
                                      std::max(1.0, folded.cwiseAbs().maxCoeff()));
  }
  std::ostringstream d;
  d << "pattern violation " << structure << ", expansion mismatch " << expansion
    << ", tied-gradient error " << grad_err;
  return {"tying_structure", structure == 0.0 && expansion == 0.0 && grad_err <= 1e-12, d.str()};
}

inline PropertyResult check_gradients(const VerifyOptions& opt) {
  auto inst = make_gradient_check_instance(opt.seed);
  const double err = gradient_check_error(inst.model, inst.batch);
  std::ostringstream d;
  d << "max relative error " << err << " over " << inst.model.params.scalar_count()
    << " parameters (tol 1e-4)";
  return {"gradient_check", err <= 1e-4, d.str()};
}

/// Line-search projection oracle. The projection onto a centred ball lies on
/// the ray through u, so: bisect for the largest feasible scale t_max, then
/// golden-section search t in [0, t_max] for the point nearest to u.
inline double projection_oracle_error(const Vector& u, double budget) {
  double t_max = 1.0;
  if (u.squaredNorm() > budget) {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      ((mid * u).squaredNorm() <= budget ? lo : hi) = mid;
    }
    t_max = lo;
  }
  constexpr double kInvPhi = 0.6180339887498949;
  double a = 0.0, b = t_max;
  const auto dist = [&](double t) { return (u - t * u).norm(); };
  for (int i = 0; i < 200 && b - a > 0.0; ++i) {
    const double c = b - kInvPhi * (b - a);
    const double d = a + kInvPhi * (b - a);
    if (dist(c) < dist(d))
      b = d;
    else
      a = c;
  }
  const Vector oracle = (0.5 * (a + b)) * u;
  const Vector v = project_onto_ball(u, budget);
  const double feasibility = std::max(0.0, v.squaredNorm() - budget);
  return std::max((v - oracle).norm(), feasibility);
}

inline PropertyResult check_projection(const VerifyOptions& opt) {
  Rng rng = make_rng(opt.seed, Stream::Verify, 13);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> budget(0.05, 3.0), scale(0.1, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vector u(2 + trial % 30);
    for (auto& x : u) x = normal(rng);
    u *= scale(rng);
    worst = std::max(worst, projection_oracle_error(u, budget(rng)));
  }
  std::ostringstream d;
  d << "max deviation from Euclidean projection " << worst << " over 1000 inputs (tol 1e-10)";
  return {"projection_optimality", worst <= 1e-10, d.str()};
}

inline PropertyResult check_lmmse_monte_carlo(const VerifyOptions& opt) {
  auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1.0, 1.0, 1.0}, 1.0);
  TrainConfig tc;
  cfg = realize_snr(cfg, tc, 25.0);
  const auto pilots = heuristic_pilots(cfg, false);
  const auto cov = identity_covariances(cfg);
  const ComplexMatrix cz = cfg.noise_variance * ComplexMatrix::Identity(cfg.observation_length(), cfg.observation_length());
  const double closed = lmmse_mse_closed_form(pilots, cov, cz);
  const double mc = lmmse_mse_monte_carlo(build_lmmse(pilots, cov, cz), pilots, cfg, cov, opt.mc_samples, opt.seed);
  const double rel = std::abs(mc - closed) / closed;
  const double tol = monte_carlo_tolerance(opt.mc_samples);
  std::ostringstream d;
  d << "closed form " << closed << ", Monte Carlo " << mc << " (" << opt.mc_samples
    << " samples), relative gap " << rel << " (tol " << tol << ")";
  return {"lmmse_monte_carlo", rel <= tol, d.str()};
}

/// Noiseless reception with the true channels of users before stage K fed
/// in as estimates: the last residual must equal X_bar_K h_K.
inline double perfect_sic_error(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> dim(1, 4), users(2, 4);
  const int k = users(rng);
  std::vector<int> m(k);
  for (auto& v : m) v = dim(rng);
  const int n = dim(rng), l = dim(rng);
  const auto cfg = SystemConfig::make(n, m, l, std::vector<double>(k, 1.0), 1.0);
  ParameterStore store;
  std::vector<StructuredPilotNet> nets;
  for (int u = 0; u < k; ++u)
    nets.push_back(make_pilot_net(store, u, random_complex(m[u], cfg.pilot_length, rng), cfg.bs_antennas, 1.0));
  const auto channel = sample_channel(cfg, identity_covariances(cfg), rng());
  Tape tape(store);
  std::vector<Var> h, sent;
  for (int u = 0; u < k; ++u) {
    h.push_back(tape.constant(pack(channel.per_user[u])));
    sent.push_back(tnn_forward(nets[u], h.back(), tape));
  }
  const Var y = superpose(sent, tape.constant(Matrix::Zero(2 * cfg.observation_length(), 1)), tape);
  const Var residual = sic_input(y, std::span(nets).first(k - 1), std::span(h).first(k - 1), tape);
  const ComplexVector expected = expand_pilot(read_pilot(store, nets[k - 1]), cfg.bs_antennas) * channel.per_user[k - 1];
  const ComplexVector got = unpack(tape.value(residual).col(0));
  return (got - expected).norm() / std::max(1e-300, expected.norm());
}

inline PropertyResult check_perfect_sic(const VerifyOptions& opt) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial)
    worst = std::max(worst, perfect_sic_error(derive_seed(opt.seed, Stream::Verify, 100 + trial)));
  std::ostringstream d;
  d << "max relative residual error " << worst << " over 100 instances (tol 1e-12)";
  return {"sic_perfect_cancellation", worst <= 1e-12, d.str()};
}

inline std::vector<PropertyResult> run_verification(const VerifyOptions& opt = {}) {
  return {check_vectorization_identity(opt), check_pilot_energy(opt), check_tying(opt),
          check_gradients(opt),              check_projection(opt),   check_lmmse_monte_carlo(opt),
          check_perfect_sic(opt)};
}

}  // namespace mumimo
