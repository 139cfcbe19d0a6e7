#pragma once

// Uplink multiuser MIMO pilot-phase signal model.
//
// K users, user k has M_k antennas and sends an M_k x L pilot X_k. The base
// station has N antennas and observes
//
//   Y = sum_k H_k X_k + Z                      (matrix form, N x L)
//   y = S g + z,  S = [X_1^T (x) I_N, ...]     (vector form, length N L)
//
// with vec() taken column-major, h_k = vec(H_k) and g = [h_1; ...; h_K].

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mumimo/errors.hpp"
#include "mumimo/random.hpp"

namespace mumimo {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct SystemConfig {
  int users = 0;
  int bs_antennas = 0;
  std::vector<int> user_antennas;
  int pilot_length = 0;
  std::vector<double> power_budgets;
  double noise_variance = 1.0;
  int total_antennas = 0;  // M = sum_k M_k, refreshed by validate()

  static SystemConfig make(int bs_antennas, std::vector<int> user_antennas, int pilot_length,
                           std::vector<double> power_budgets, double noise_variance) {
    SystemConfig cfg;
    cfg.users = static_cast<int>(user_antennas.size());
    cfg.bs_antennas = bs_antennas;
    cfg.user_antennas = std::move(user_antennas);
    cfg.pilot_length = pilot_length;
    cfg.power_budgets = std::move(power_budgets);
    cfg.noise_variance = noise_variance;
    cfg.validate();
    return cfg;
  }

  /// Checks every dimension and recomputes M. L < M is allowed.
  void validate() {
    if (users < 1) throw ConfigError("number of users must be >= 1");
    if (bs_antennas < 1) throw ConfigError("bs_antennas must be >= 1");
    if (pilot_length < 1) throw ConfigError("pilot_length must be >= 1");
    if (static_cast<int>(user_antennas.size()) != users)
      throw ConfigError("user_antennas must list " + std::to_string(users) + " entries");
    if (static_cast<int>(power_budgets.size()) != users)
      throw ConfigError("power_budgets must list " + std::to_string(users) + " entries");
    for (int m : user_antennas)
      if (m < 1) throw ConfigError("every user needs >= 1 antenna");
    for (double p : power_budgets)
      if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("power budgets must be finite and >= 0");
    if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
      throw ConfigError("noise_variance must be positive");
    total_antennas = std::accumulate(user_antennas.begin(), user_antennas.end(), 0);
  }

  int channel_length(int k) const { return bs_antennas * user_antennas[k]; }
  int stacked_length() const { return bs_antennas * total_antennas; }
  int observation_length() const { return bs_antennas * pilot_length; }
  /// Offset of h_k inside g.
  int channel_offset(int k) const {
    return bs_antennas * std::accumulate(user_antennas.begin(), user_antennas.begin() + k, 0);
  }
};

struct ChannelRealization {
  std::vector<ComplexVector> per_user;  // h_k = vec(H_k), length N M_k
  ComplexVector stacked;                // g
  std::vector<ComplexMatrix> covariances;
};

struct ReceivedSignal {
  ComplexMatrix matrix_form;  // Y, N x L
  ComplexVector vector_form;  // y = vec(Y)
  ComplexVector noise;        // z
};

inline ComplexVector vec(const ComplexMatrix& m) {
  return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw DimensionError("unvec: length does not match rows * cols");
  return Eigen::Map<const ComplexMatrix>(v.data(), rows, cols);
}

inline ComplexVector concat(std::span<const ComplexVector> blocks) {
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.size();
  ComplexVector out(total);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.segment(at, b.size()) = b;
    at += b.size();
  }
  return out;
}

inline std::vector<ComplexMatrix> identity_covariances(const SystemConfig& cfg) {
  std::vector<ComplexMatrix> out;
  for (int k = 0; k < cfg.users; ++k)
    out.push_back(ComplexMatrix::Identity(cfg.channel_length(k), cfg.channel_length(k)));
  return out;
}

/// Hermitian square root R^{1/2} via eigendecomposition. Eigenvalues in
/// [-1e-10, 0) are clamped to zero; anything more negative is rejected.
inline ComplexMatrix covariance_sqrt(const ComplexMatrix& r, int user) {
  constexpr double kTol = 1e-10;
  if (r.rows() != r.cols()) throw CovarianceError(user, "matrix is not square");
  if (r.size() == 0) return r;
  const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
  if ((r - r.adjoint()).cwiseAbs().maxCoeff() > kTol * scale)
    throw CovarianceError(user, "matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(r);
  if (eig.info() != Eigen::Success) throw CovarianceError(user, "eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -kTol) throw CovarianceError(user, "matrix has a negative eigenvalue");
    lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  }
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().adjoint();
}

/// Draws h_k = R_k^{1/2} w_k with w_k ~ CN(0, I). Factors are computed once.
class ChannelSampler {
 public:
  ChannelSampler(const SystemConfig& cfg, std::vector<ComplexMatrix> covariances)
      : cfg_(cfg), covariances_(std::move(covariances)) {
    if (static_cast<int>(covariances_.size()) != cfg_.users)
      throw DimensionError("one covariance per user is required");
    for (int k = 0; k < cfg_.users; ++k) {
      if (covariances_[k].rows() != cfg_.channel_length(k))
        throw CovarianceError(k, "expected size " + std::to_string(cfg_.channel_length(k)));
      roots_.push_back(covariance_sqrt(covariances_[k], k));
      identity_.push_back(roots_.back().isIdentity(0.0));
    }
  }

  ChannelRealization operator()(Rng& rng) {
    ChannelRealization out;
    out.covariances = covariances_;
    for (int k = 0; k < cfg_.users; ++k) {
      ComplexVector w(cfg_.channel_length(k));
      for (auto& x : w) x = normal_(rng);
      out.per_user.push_back(identity_[k] ? w : ComplexVector(roots_[k] * w));
    }
    out.stacked = concat(out.per_user);
    return out;
  }

  const std::vector<ComplexMatrix>& covariances() const { return covariances_; }
  const ComplexMatrix& root(int k) const { return roots_[k]; }
  bool is_identity(int k) const { return identity_[k]; }

 private:
  SystemConfig cfg_;
  std::vector<ComplexMatrix> covariances_;
  std::vector<ComplexMatrix> roots_;
  std::vector<bool> identity_;
  ComplexNormal normal_;
};

inline ChannelRealization sample_channel(const SystemConfig& cfg,
                                         const std::vector<ComplexMatrix>& covariances,
                                         std::uint64_t seed) {
  ChannelSampler sampler(cfg, covariances);
  Rng rng(seed);
  return sampler(rng);
}

/// z ~ CN(0, sigma^2 I_{NL}).
inline ComplexVector sample_noise(const SystemConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ComplexNormal normal;
  ComplexVector z(cfg.observation_length());
  for (auto& x : z) x = normal(rng, cfg.noise_variance);
  return z;
}

/// X_bar = X^T (x) I_N, an NL x N M_k matrix.
inline ComplexMatrix expand_pilot(const ComplexMatrix& pilot, int bs_antennas) {
  if (bs_antennas < 1) throw DimensionError("expand_pilot: N must be >= 1");
  const Eigen::Index n = bs_antennas;
  ComplexMatrix out = ComplexMatrix::Zero(n * pilot.cols(), n * pilot.rows());
  for (Eigen::Index l = 0; l < pilot.cols(); ++l)
    for (Eigen::Index m = 0; m < pilot.rows(); ++m)
      for (Eigen::Index i = 0; i < n; ++i) out(l * n + i, m * n + i) = pilot(m, l);
  return out;
}

/// S = [X_1^T (x) I_N, ..., X_K^T (x) I_N].
inline ComplexMatrix build_stacked_pilot(std::span<const ComplexMatrix> pilots, int bs_antennas) {
  if (pilots.empty()) throw DimensionError("build_stacked_pilot: no pilots");
  const Eigen::Index length = pilots.front().cols();
  Eigen::Index cols = 0;
  for (const auto& x : pilots) {
    if (x.cols() != length) throw DimensionError("build_stacked_pilot: pilots differ in length L");
    cols += x.rows() * bs_antennas;
  }
  ComplexMatrix s(length * bs_antennas, cols);
  Eigen::Index at = 0;
  for (const auto& x : pilots) {
    const Eigen::Index w = x.rows() * bs_antennas;
    s.middleCols(at, w) = expand_pilot(x, bs_antennas);
    at += w;
  }
  return s;
}

inline void check_pilot_shapes(std::span<const ComplexMatrix> pilots, const SystemConfig& cfg) {
  if (static_cast<int>(pilots.size()) != cfg.users)
    throw DimensionError("expected " + std::to_string(cfg.users) + " pilot matrices");
  for (int k = 0; k < cfg.users; ++k)
    if (pilots[k].rows() != cfg.user_antennas[k] || pilots[k].cols() != cfg.pilot_length)
      throw DimensionError("pilot of user " + std::to_string(k) + " must be " +
                           std::to_string(cfg.user_antennas[k]) + " x " +
                           std::to_string(cfg.pilot_length));
}

/// Fills both the matrix form (sum of H_k X_k) and the vector form (S g).
/// The two are computed independently so they can be cross-checked.
inline ReceivedSignal simulate_reception(std::span<const ComplexMatrix> pilots,
                                         const ChannelRealization& channel,
                                         const ComplexVector& noise, const SystemConfig& cfg) {
  check_pilot_shapes(pilots, cfg);
  if (static_cast<int>(channel.per_user.size()) != cfg.users ||
      channel.stacked.size() != cfg.stacked_length())
    throw DimensionError("simulate_reception: channel does not match the configuration");
  if (noise.size() != cfg.observation_length())
    throw DimensionError("simulate_reception: noise length must be N L");

  const int n = cfg.bs_antennas;
  ReceivedSignal out;
  out.noise = noise;
  out.matrix_form = unvec(noise, n, cfg.pilot_length);
  for (int k = 0; k < cfg.users; ++k) {
    if (channel.per_user[k].size() != cfg.channel_length(k))
      throw DimensionError("simulate_reception: channel block length mismatch");
    out.matrix_form += unvec(channel.per_user[k], n, cfg.user_antennas[k]) * pilots[k];
  }
  out.vector_form = build_stacked_pilot(pilots, n) * channel.stacked + noise;
  return out;
}

inline ReceivedSignal simulate_reception(std::span<const ComplexMatrix> pilots,
                                         const ChannelRealization& channel, const SystemConfig& cfg,
                                         std::uint64_t noise_seed) {
  return simulate_reception(pilots, channel, sample_noise(cfg, noise_seed), cfg);
}

/// tr(X X^H) = ||vec(X)||^2.
inline double pilot_energy(const ComplexMatrix& pilot) { return pilot.squaredNorm(); }

}  // namespace mumimo
