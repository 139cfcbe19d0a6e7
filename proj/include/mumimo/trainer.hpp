#pragma once

// Joint offline training of the pilot networks and the SIC estimator chain.
//
// Each optimizer step draws a minibatch of channels and noise, runs
// transmission (pilot nets + superposition) and the SIC estimator on a tape,
// and minimises the batch mean of ||g - g_hat||^2. Estimator weights take a
// plain SGD step, pilots take a projected step onto their energy ball.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mumimo/dense.hpp"
#include "mumimo/lmmse.hpp"
#include "mumimo/mimo_model.hpp"
#include "mumimo/pilot_tnn.hpp"
#include "mumimo/sic_estimator.hpp"
#include "mumimo/tape.hpp"

namespace mumimo {

enum class SnrMode {
  PerUserPower,  // shared noise, per-user budgets scaled by the SNR offsets
  StrictPaper,   // budgets as configured, offsets ignored
};

enum class PilotInit { Random, Heuristic };

struct TrainConfig {
  double step_size = 1e-3;
  int batch_size = 200;
  std::size_t train_samples = 1'000'000;
  std::size_t test_samples = 100'000;
  int epochs = 20;
  double snr_db = 25.0;
  std::vector<double> snr_offsets_db = {3.0, 0.0, -3.0};
  std::uint64_t seed = 1;
  int hidden_layers = 5;
  int hidden_width = 60;
  SnrMode snr_mode = SnrMode::PerUserPower;
  std::vector<int> sic_order;  // empty: descending per-user SNR
  PilotInit pilot_init = PilotInit::Random;
  int chunk_size = 50;  // samples per tape; fixed so results do not depend on thread count
  int threads = 0;      // 0: MUMIMO_THREADS or hardware concurrency
  double divergence_factor = 10.0;

  void validate(const SystemConfig& system) const {
    if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ConfigError("step_size must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (epochs > 0 && train_samples == 0) throw ConfigError("train_samples must be > 0");
    if (hidden_layers < 0 || hidden_width < 1) throw ConfigError("invalid hidden layer shape");
    if (chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
    if (!(divergence_factor > 0.0)) throw ConfigError("divergence_factor must be positive");
    if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
    if (snr_mode == SnrMode::PerUserPower && !snr_offsets_db.empty() &&
        static_cast<int>(snr_offsets_db.size()) != system.users)
      throw ConfigError("snr_offsets_db must list one offset per user");
    if (!sic_order.empty()) {
      if (static_cast<int>(sic_order.size()) != system.users)
        throw ConfigError("sic_order must list every user once");
      std::vector<int> sorted = sic_order;
      std::sort(sorted.begin(), sorted.end());
      for (int k = 0; k < system.users; ++k)
        if (sorted[k] != k) throw ConfigError("sic_order must be a permutation of 0..K-1");
    }
  }
};

/// sigma^2 = p / (rho L), rho = 10^(snr_db / 10).
inline double snr_to_noise(double snr_db, double power, int pilot_length) {
  if (!std::isfinite(snr_db) || !std::isfinite(power)) throw std::invalid_argument("snr_to_noise: non-finite input");
  if (pilot_length < 1) throw std::invalid_argument("snr_to_noise: L must be >= 1");
  if (!(power > 0.0)) throw std::invalid_argument("snr_to_noise: power must be positive");
  return power / (std::pow(10.0, snr_db / 10.0) * pilot_length);
}

/// Applies the SNR convention to a base system. PerUserPower keeps one noise
/// level (set by the reference user, the first with offset 0) and scales
/// p_k by 10^(offset_k / 10).
inline SystemConfig realize_snr(SystemConfig system, const TrainConfig& cfg, double snr_db) {
  int reference = 0;
  std::vector<double> offsets(system.users, 0.0);
  if (cfg.snr_mode == SnrMode::PerUserPower && !cfg.snr_offsets_db.empty()) {
    offsets = cfg.snr_offsets_db;
    auto it = std::find(offsets.begin(), offsets.end(), 0.0);
    if (it != offsets.end()) reference = static_cast<int>(it - offsets.begin());
  }
  const double base = system.power_budgets[reference];
  system.noise_variance = snr_to_noise(snr_db, base > 0.0 ? base : 1.0, system.pilot_length);
  for (int k = 0; k < system.users; ++k)
    system.power_budgets[k] *= std::pow(10.0, offsets[k] / 10.0);
  system.validate();
  return system;
}

inline SystemConfig realize_snr(const SystemConfig& system, const TrainConfig& cfg) {
  return realize_snr(system, cfg, cfg.snr_db);
}

/// Users sorted by descending per-user SNR (p_k / sigma^2), ties by index.
inline std::vector<int> descending_snr_order(const SystemConfig& system) {
  std::vector<int> order = identity_order(system.users);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return system.power_budgets[a] > system.power_budgets[b];
  });
  return order;
}

struct JointModel {
  ParameterStore params;
  std::vector<StructuredPilotNet> pilots;
  std::vector<EstimatorNet> estimators;
  std::vector<int> sic_order;
};

/// `system` must already carry the realized budgets.
inline JointModel make_model(const SystemConfig& system, const TrainConfig& cfg) {
  JointModel model;
  Rng rng = make_rng(cfg.seed, Stream::Init);
  std::vector<ComplexMatrix> warm;
  if (cfg.pilot_init == PilotInit::Heuristic) warm = heuristic_pilots(system, true);
  for (int k = 0; k < system.users; ++k) {
    const ComplexMatrix x =
        cfg.pilot_init == PilotInit::Heuristic
            ? warm[k]
            : random_pilot(system.user_antennas[k], system.pilot_length, system.power_budgets[k], rng);
    model.pilots.push_back(
        make_pilot_net(model.params, k, x, system.bs_antennas, system.power_budgets[k]));
  }
  for (int k = 0; k < system.users; ++k)
    model.estimators.push_back(make_estimator_net(model.params, k, system.bs_antennas,
                                                  system.pilot_length, system.user_antennas[k],
                                                  cfg.hidden_layers, cfg.hidden_width, rng));
  model.sic_order = cfg.sic_order.empty() ? descending_snr_order(system) : cfg.sic_order;
  return model;
}

// Sampling ------------------------------------------------------------------

/// Packed channels (one 2 N M_k x B matrix per user) and packed noise.
struct Batch {
  std::vector<Matrix> channels;
  Matrix noise;
  Eigen::Index size() const { return noise.cols(); }

  Batch columns(Eigen::Index first, Eigen::Index count) const {
    Batch out;
    for (const auto& c : channels) out.channels.push_back(c.middleCols(first, count));
    out.noise = noise.middleCols(first, count);
    return out;
  }
};

/// Channel draws come first, then unit-variance noise scaled by sigma, so the
/// same stream yields the same channels and the same noise shape at every SNR.
inline Batch sample_batch(const SystemConfig& system, ChannelSampler& sampler, Rng& rng,
                          Eigen::Index size) {
  Batch batch;
  for (int k = 0; k < system.users; ++k) batch.channels.emplace_back(2 * system.channel_length(k), size);
  batch.noise.resize(2 * system.observation_length(), size);
  ComplexNormal normal;
  const double sigma = std::sqrt(system.noise_variance);
  const Eigen::Index nl = system.observation_length();
  for (Eigen::Index b = 0; b < size; ++b) {
    const ChannelRealization ch = sampler(rng);
    for (int k = 0; k < system.users; ++k) batch.channels[k].col(b) = pack(ch.per_user[k]);
    for (Eigen::Index i = 0; i < nl; ++i) {
      const Complex w = normal(rng);
      batch.noise(i, b) = sigma * w.real();
      batch.noise(nl + i, b) = sigma * w.imag();
    }
  }
  return batch;
}

/// A fixed sample set regenerated on demand from (seed, stream): batch j of
/// the set always comes from the same sub-stream.
class SampleSet {
 public:
  SampleSet(const SystemConfig& system, std::vector<ComplexMatrix> covariances, std::uint64_t seed,
            Stream stream, std::size_t count, Eigen::Index batch_size)
      : system_(system),
        sampler_(system, std::move(covariances)),
        seed_(seed),
        stream_(stream),
        count_(count),
        batch_size_(batch_size) {}

  std::size_t batches() const { return (count_ + batch_size_ - 1) / batch_size_; }
  std::size_t count() const { return count_; }

  Batch batch(std::size_t j) {
    Rng rng = make_rng(seed_, stream_, j);
    const std::size_t first = j * static_cast<std::size_t>(batch_size_);
    const auto n = static_cast<Eigen::Index>(std::min<std::size_t>(batch_size_, count_ - first));
    return sample_batch(system_, sampler_, rng, n);
  }

 private:
  SystemConfig system_;
  ChannelSampler sampler_;
  std::uint64_t seed_;
  Stream stream_;
  std::size_t count_;
  Eigen::Index batch_size_;
};

// Loss ----------------------------------------------------------------------

/// J = (1/|P|) sum ||g - g_hat||^2 over (g, g_hat) pairs.
inline double empirical_loss(std::span<const std::pair<ComplexVector, ComplexVector>> batch) {
  if (batch.empty()) throw std::invalid_argument("empirical_loss: empty batch");
  double total = 0.0;
  for (const auto& [g, g_hat] : batch) {
    if (g.size() != g_hat.size()) throw DimensionError("empirical_loss: length mismatch");
    total += (g - g_hat).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

struct ForwardGraph {
  Var loss;  // sum over the chunk of ||g - g_hat||^2, divided by `normalizer`
  std::vector<Var> channels;
  Var received;
  SicOutput sic;
};

/// Records transmission, reception and SIC estimation for one chunk.
inline ForwardGraph record_forward(const JointModel& model, const Batch& chunk, double normalizer,
                                   Tape& tape) {
  ForwardGraph graph;
  std::vector<Var> transmitted;
  for (std::size_t k = 0; k < model.pilots.size(); ++k) {
    graph.channels.push_back(tape.constant(chunk.channels[k]));
    transmitted.push_back(tnn_forward(model.pilots[k], graph.channels.back(), tape));
  }
  graph.received = superpose(transmitted, tape.constant(chunk.noise), tape);
  graph.sic = estimate_all(model.estimators, model.pilots, graph.received, model.sic_order, tape);
  std::vector<Var> errors;
  for (std::size_t k = 0; k < model.pilots.size(); ++k)
    errors.push_back(tape.sub(graph.sic.estimates[k], graph.channels[k]));
  graph.loss = tape.scale(tape.sum_squares(tape.vstack(errors)), 1.0 / normalizer);
  return graph;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MUMIMO_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `work(chunk_index)` for every chunk, spread over `threads` workers.
template <typename Work>
void for_each_chunk(std::size_t chunks, int threads, Work&& work) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < chunks; c += workers) work(c);
    });
  for (auto& t : pool) t.join();
}

struct BatchResult {
  double loss = 0.0;
  GradientMap grads;
};

/// Batch loss J and, optionally, its gradient. Chunks are reduced in index
/// order, so the result is independent of the thread count.
inline BatchResult batch_loss(const JointModel& model, const Batch& batch, int chunk_size,
                              int threads, bool with_gradient) {
  const Eigen::Index b = batch.size();
  const std::size_t chunks = (b + chunk_size - 1) / chunk_size;
  std::vector<BatchResult> parts(chunks);
  for_each_chunk(chunks, threads, [&](std::size_t c) {
    const Eigen::Index first = static_cast<Eigen::Index>(c) * chunk_size;
    const Batch chunk = batch.columns(first, std::min<Eigen::Index>(chunk_size, b - first));
    Tape tape(model.params);
    const ForwardGraph graph = record_forward(model, chunk, static_cast<double>(b), tape);
    parts[c].loss = tape.value(graph.loss)(0, 0);
    if (with_gradient) parts[c].grads = tape.backward(graph.loss);
  });
  BatchResult out;
  for (auto& p : parts) {
    out.loss += p.loss;
    if (with_gradient) out.grads += p.grads;
  }
  return out;
}

/// One synchronous update: SGD on estimator weights, projected step on pilots.
inline void apply_update(JointModel& model, GradientMap grads, double step_size, long long step) {
  std::vector<Matrix> pilot_grads;
  for (const auto& net : model.pilots) {
    Matrix g = grads.extract(net.free_params);
    if (g.size() == 0) g = Matrix::Zero(model.params.value(net.free_params).rows(), 1);
    if (!g.allFinite())
      throw NumericalError("non-finite gradient for '" + model.params.name(net.free_params) +
                           "' at step " + std::to_string(step));
    pilot_grads.push_back(std::move(g));
  }
  sgd_step(model.params, grads, step_size, step);
  for (std::size_t k = 0; k < model.pilots.size(); ++k)
    project_power(model.params, model.pilots[k], Vector(pilot_grads[k].col(0)), step_size);
}

// Evaluation ----------------------------------------------------------------

inline double evaluate(const JointModel& model, SampleSet& test, int chunk_size = 500, int threads = 1) {
  if (test.count() == 0) throw std::invalid_argument("evaluate: empty test set");
  double total = 0.0;
  for (std::size_t j = 0; j < test.batches(); ++j) {
    const Batch batch = test.batch(j);
    total += batch_loss(model, batch, chunk_size, threads, false).loss * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(test.count());
}

/// Monte-Carlo MSE of a fixed linear estimator on the same sample set.
inline double evaluate_lmmse(const LmmseEstimator& est, std::span<const ComplexMatrix> pilots,
                             const SystemConfig& system, SampleSet& test) {
  const ComplexMatrix s = build_stacked_pilot(pilots, system.bs_antennas);
  double total = 0.0;
  for (std::size_t j = 0; j < test.batches(); ++j) {
    const Batch batch = test.batch(j);
    const Eigen::Index b = batch.size();
    ComplexMatrix g(system.stacked_length(), b);
    ComplexMatrix z(system.observation_length(), b);
    for (Eigen::Index c = 0; c < b; ++c) {
      std::vector<ComplexVector> blocks;
      for (int k = 0; k < system.users; ++k) blocks.push_back(unpack(batch.channels[k].col(c)));
      g.col(c) = concat(blocks);
      z.col(c) = unpack(batch.noise.col(c));
    }
    total += (g - est.stacked * (s * g + z)).squaredNorm();
  }
  return total / static_cast<double>(test.count());
}

struct BaselineResult {
  double closed_form = 0.0;
  double monte_carlo = 0.0;
};

/// Heuristic pilots + LMMSE, literal or budget-normalized. Empty when the
/// heuristic is not defined for the shape.
inline std::optional<BaselineResult> heuristic_baseline(const SystemConfig& system,
                                                        const std::vector<ComplexMatrix>& covariances,
                                                        bool normalized, SampleSet& test) {
  std::vector<ComplexMatrix> pilots;
  try {
    pilots = heuristic_pilots(system, normalized);
  } catch (const DimensionError&) {
    return std::nullopt;
  }
  const ComplexMatrix cz = system.noise_variance *
                           ComplexMatrix::Identity(system.observation_length(), system.observation_length());
  const LmmseEstimator est = build_lmmse(pilots, covariances, cz);
  BaselineResult out;
  out.closed_form = lmmse_mse(pilots, covariances, cz);
  out.monte_carlo = evaluate_lmmse(est, pilots, system, test);
  return out;
}

// Training ------------------------------------------------------------------

struct TrainReport {
  SystemConfig system;  // with realized budgets and noise
  std::vector<double> per_epoch_train_mse;
  std::vector<double> per_epoch_test_mse;
  double initial_test_mse = 0.0;
  std::vector<ComplexMatrix> final_pilots;
  std::optional<BaselineResult> baseline_fair;
  std::optional<BaselineResult> baseline_literal;
  long long steps = 0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  JointModel model;
  TrainReport report;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, TrainReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

struct TrainHooks {
  std::function<void(int epoch, const TrainReport&)> on_epoch;
  std::function<void(long long step, const JointModel&)> on_step;
};

/// Trains on a realized system (see realize_snr) and an optional channel
/// covariance set (identity when empty).
inline TrainResult train_realized(const SystemConfig& system, const TrainConfig& cfg,
                                  std::vector<ComplexMatrix> covariances = {},
                                  const TrainHooks& hooks = {}) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(system);
  if (covariances.empty()) covariances = identity_covariances(system);
  const int threads = resolve_threads(cfg.threads);

  TrainResult result{make_model(system, cfg), {}};
  JointModel& model = result.model;
  TrainReport& report = result.report;
  report.system = system;

  SampleSet train_set(system, covariances, cfg.seed, Stream::Train, cfg.train_samples, cfg.batch_size);
  SampleSet test_set(system, covariances, cfg.seed, Stream::Test, cfg.test_samples, 1000);
  const bool has_test = cfg.test_samples > 0;
  if (has_test) {
    report.initial_test_mse = evaluate(model, test_set, 500, threads);
    report.baseline_fair = heuristic_baseline(system, covariances, true, test_set);
    report.baseline_literal = heuristic_baseline(system, covariances, false, test_set);
  }

  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0.0;
    double min_loss = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < train_set.batches(); ++j) {
      const Batch batch = train_set.batch(j);
      BatchResult r = batch_loss(model, batch, cfg.chunk_size, threads, true);
      if (!std::isfinite(r.loss))
        throw NumericalError("non-finite training loss at step " + std::to_string(report.steps));
      if (std::isnan(initial_loss)) initial_loss = r.loss;
      sum += r.loss * static_cast<double>(batch.size());
      min_loss = std::min(min_loss, r.loss);
      apply_update(model, std::move(r.grads), cfg.step_size, report.steps);
      ++report.steps;
      if (hooks.on_step) hooks.on_step(report.steps, model);
    }
    report.per_epoch_train_mse.push_back(sum / static_cast<double>(train_set.count()));
    report.per_epoch_test_mse.push_back(has_test ? evaluate(model, test_set, 500, threads)
                                                 : std::numeric_limits<double>::quiet_NaN());
    if (hooks.on_epoch) hooks.on_epoch(epoch, report);
    if (min_loss > cfg.divergence_factor * initial_loss) {
      report.final_pilots = read_designed_pilots(model.params, model.pilots);
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                                ": every batch loss exceeded " +
                                std::to_string(cfg.divergence_factor) + "x the initial loss",
                            report);
    }
  }
  report.final_pilots = read_designed_pilots(model.params, model.pilots);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

/// Applies the SNR convention of `cfg` to `system`, then trains.
inline TrainResult train(const SystemConfig& system, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
  cfg.validate(system);
  return train_realized(realize_snr(system, cfg), cfg, {}, hooks);
}

// SNR sweep -----------------------------------------------------------------

struct SweepRow {
  double snr_db = 0.0;
  double mse_proposed = 0.0;
  double mse_lmmse_literal = std::numeric_limits<double>::quiet_NaN();
  double mse_lmmse_fair = std::numeric_limits<double>::quiet_NaN();
};

/// Per SNR point: train a model (or reuse the one trained at cfg.snr_db when
/// retrain_per_point is false) and evaluate it and both baselines on a test
/// set drawn from the same stream at every point.
inline std::vector<SweepRow> snr_sweep(const SystemConfig& system, const TrainConfig& cfg,
                                       std::span<const double> snr_list_db,
                                       bool retrain_per_point = true,
                                       const TrainHooks& hooks = {}) {
  if (snr_list_db.empty()) throw std::invalid_argument("snr_sweep: empty SNR list");
  cfg.validate(system);
  const int threads = resolve_threads(cfg.threads);
  TrainConfig no_test = cfg;
  no_test.test_samples = 0;

  std::optional<JointModel> shared;
  if (!retrain_per_point) shared = train(system, no_test, hooks).model;

  std::vector<SweepRow> rows;
  for (double snr : snr_list_db) {
    const SystemConfig point = realize_snr(system, cfg, snr);
    const auto covariances = identity_covariances(point);
    SampleSet test(point, covariances, cfg.seed, Stream::Test, cfg.test_samples, 1000);
    SweepRow row;
    row.snr_db = snr;
    if (retrain_per_point) {
      const JointModel model = train_realized(point, no_test, covariances, hooks).model;
      row.mse_proposed = evaluate(model, test, 500, threads);
    } else {
      row.mse_proposed = evaluate(*shared, test, 500, threads);
    }
    if (auto lit = heuristic_baseline(point, covariances, false, test)) row.mse_lmmse_literal = lit->monte_carlo;
    if (auto fair = heuristic_baseline(point, covariances, true, test)) row.mse_lmmse_fair = fair->monte_carlo;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mumimo
