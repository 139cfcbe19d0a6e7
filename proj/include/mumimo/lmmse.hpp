#pragma once

// Linear MMSE baseline: estimator, closed-form MSE, and the heuristic
// nonorthogonal pilots used as the comparison point.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mumimo/mimo_model.hpp"

namespace mumimo {

struct LmmseEstimator {
  ComplexMatrix stacked;                 // D_bar = [D_1; ...; D_K], NM x NL
  std::vector<ComplexMatrix> per_user;   // D_k, N M_k x NL
  ComplexMatrix channel_covariance;      // C_h = blkdiag(R_1, ..., R_K)
  ComplexMatrix noise_covariance;        // C_z
};

inline ComplexMatrix block_diagonal(std::span<const ComplexMatrix> blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  ComplexMatrix out = ComplexMatrix::Zero(n, n);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.block(at, at, b.rows(), b.cols()) = b;
    at += b.rows();
  }
  return out;
}

namespace detail {

inline int infer_bs_antennas(std::span<const ComplexMatrix> pilots,
                             std::span<const ComplexMatrix> covariances,
                             const ComplexMatrix& noise_covariance) {
  if (pilots.empty() || pilots.size() != covariances.size())
    throw DimensionError("need one covariance per pilot");
  const Eigen::Index length = pilots.front().cols();
  if (length == 0 || noise_covariance.rows() % length != 0 ||
      noise_covariance.rows() != noise_covariance.cols())
    throw DimensionError("noise covariance must be NL x NL");
  const Eigen::Index n = noise_covariance.rows() / length;
  for (std::size_t k = 0; k < pilots.size(); ++k) {
    if (pilots[k].cols() != length) throw DimensionError("pilots differ in length L");
    if (covariances[k].rows() != n * pilots[k].rows() || covariances[k].cols() != covariances[k].rows())
      throw DimensionError("covariance of user " + std::to_string(k) + " must be N M_k square");
  }
  return static_cast<int>(n);
}

}  // namespace detail

/// D_k = R_k X_bar_k^H (sum_i X_bar_i R_i X_bar_i^H + C_z)^{-1}. The inner
/// matrix is factored once (Cholesky) and shared by every user.
inline LmmseEstimator build_lmmse(std::span<const ComplexMatrix> pilots,
                                  std::span<const ComplexMatrix> covariances,
                                  const ComplexMatrix& noise_covariance) {
  const int n = detail::infer_bs_antennas(pilots, covariances, noise_covariance);
  std::vector<ComplexMatrix> expanded;
  ComplexMatrix inner = noise_covariance;
  for (std::size_t k = 0; k < pilots.size(); ++k) {
    expanded.push_back(expand_pilot(pilots[k], n));
    inner += expanded.back() * covariances[k] * expanded.back().adjoint();
  }
  Eigen::LLT<ComplexMatrix> chol(inner);
  if (chol.info() != Eigen::Success)
    throw SingularMatrixError("LMMSE: received-signal covariance is not positive definite");

  LmmseEstimator est;
  for (std::size_t k = 0; k < pilots.size(); ++k) {
    // inner^{-1} X_bar_k R_k, then take the adjoint (inner and R_k Hermitian).
    ComplexMatrix rhs = expanded[k] * covariances[k];
    est.per_user.push_back(chol.solve(rhs).adjoint());
  }
  Eigen::Index rows = 0;
  for (const auto& d : est.per_user) rows += d.rows();
  est.stacked.resize(rows, noise_covariance.rows());
  Eigen::Index at = 0;
  for (const auto& d : est.per_user) {
    est.stacked.middleRows(at, d.rows()) = d;
    at += d.rows();
  }
  est.channel_covariance = block_diagonal(covariances);
  est.noise_covariance = noise_covariance;
  return est;
}

inline ComplexVector lmmse_estimate(const LmmseEstimator& est, const ComplexVector& y) {
  if (y.size() != est.stacked.cols()) throw DimensionError("lmmse_estimate: y has the wrong length");
  return est.stacked * y;
}

/// tr{(C_h^{-1} + S^H C_z^{-1} S)^{-1}}. Throws SingularMatrixError when some
/// R_k is singular; use lmmse_mse_from_estimator in that case.
inline double lmmse_mse_closed_form(std::span<const ComplexMatrix> pilots,
                                    std::span<const ComplexMatrix> covariances,
                                    const ComplexMatrix& noise_covariance) {
  const int n = detail::infer_bs_antennas(pilots, covariances, noise_covariance);
  const ComplexMatrix ch = block_diagonal(covariances);
  Eigen::LLT<ComplexMatrix> ch_chol(ch);
  if (ch_chol.info() != Eigen::Success)
    throw SingularMatrixError(
        "closed-form MSE needs an invertible channel covariance; regularize R_k or use "
        "lmmse_mse_from_estimator");
  Eigen::LLT<ComplexMatrix> cz_chol(noise_covariance);
  if (cz_chol.info() != Eigen::Success)
    throw SingularMatrixError("noise covariance is not positive definite");
  const ComplexMatrix s = build_stacked_pilot(pilots, n);
  const ComplexMatrix ident = ComplexMatrix::Identity(ch.rows(), ch.cols());
  const ComplexMatrix precision = ch_chol.solve(ident) + s.adjoint() * cz_chol.solve(s);
  Eigen::LLT<ComplexMatrix> p_chol(precision);
  if (p_chol.info() != Eigen::Success) throw SingularMatrixError("posterior precision is singular");
  return p_chol.solve(ident).trace().real();
}

/// tr(C_h) - tr(D_bar S C_h); valid for singular C_h.
inline double lmmse_mse_from_estimator(const LmmseEstimator& est,
                                       std::span<const ComplexMatrix> pilots) {
  const int n = static_cast<int>(est.noise_covariance.rows() / pilots.front().cols());
  const ComplexMatrix s = build_stacked_pilot(pilots, n);
  return est.channel_covariance.trace().real() -
         (est.stacked * s * est.channel_covariance).trace().real();
}

/// Closed form when C_h is invertible, otherwise the estimator-based form.
inline double lmmse_mse(std::span<const ComplexMatrix> pilots,
                        std::span<const ComplexMatrix> covariances,
                        const ComplexMatrix& noise_covariance) {
  try {
    return lmmse_mse_closed_form(pilots, covariances, noise_covariance);
  } catch (const SingularMatrixError&) {
    return lmmse_mse_from_estimator(build_lmmse(pilots, covariances, noise_covariance), pilots);
  }
}

/// Empirical E||g - D_bar y||^2 over `samples` fresh draws.
inline double lmmse_mse_monte_carlo(const LmmseEstimator& est, std::span<const ComplexMatrix> pilots,
                                    const SystemConfig& cfg,
                                    const std::vector<ComplexMatrix>& covariances,
                                    std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("Monte-Carlo MSE needs at least one sample");
  check_pilot_shapes(pilots, cfg);
  ChannelSampler sampler(cfg, covariances);
  const ComplexMatrix s = build_stacked_pilot(pilots, cfg.bs_antennas);
  Eigen::LLT<ComplexMatrix> cz_chol(est.noise_covariance);
  const ComplexMatrix cz_root = cz_chol.matrixL();
  Rng rng = make_rng(seed, Stream::Baseline);
  ComplexNormal normal;

  constexpr std::size_t kChunk = 2000;
  double total = 0.0;
  for (std::size_t done = 0; done < samples; done += kChunk) {
    const auto b = static_cast<Eigen::Index>(std::min(kChunk, samples - done));
    ComplexMatrix g(cfg.stacked_length(), b);
    ComplexMatrix w(cfg.observation_length(), b);
    for (Eigen::Index j = 0; j < b; ++j) {
      g.col(j) = sampler(rng).stacked;
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
    }
    const ComplexMatrix y = s * g + cz_root * w;
    total += (g - est.stacked * y).squaredNorm();
  }
  return total / static_cast<double>(samples);
}

/// X_k = sqrt(p_k / 2) [U_k, U_k], U_k = diag(1, e^{j pi}, e^{j 5pi/6}, e^{j 2pi/3})^{k-1}.
/// Defined for L = 2 M_k with M_k <= 4 (leading phases when M_k < 4).
/// With normalize_to_budget each X_k is rescaled to energy p_k; otherwise the
/// literal formula is used, whose energy is M_k p_k.
inline std::vector<ComplexMatrix> heuristic_pilots(const SystemConfig& cfg,
                                                   bool normalize_to_budget = false) {
  constexpr double kPi = std::numbers::pi;
  constexpr double kPhases[] = {0.0, kPi, 5.0 * kPi / 6.0, 2.0 * kPi / 3.0};
  std::vector<ComplexMatrix> pilots;
  for (int k = 0; k < cfg.users; ++k) {
    const int m = cfg.user_antennas[k];
    if (m > 4 || cfg.pilot_length != 2 * m)
      throw DimensionError("heuristic pilots need L = 2 M_k and M_k <= 4 (user " +
                           std::to_string(k) + " has M_k = " + std::to_string(m) +
                           ", L = " + std::to_string(cfg.pilot_length) + ")");
    const double p = cfg.power_budgets[k];
    ComplexMatrix x = ComplexMatrix::Zero(m, cfg.pilot_length);
    for (int i = 0; i < m; ++i) {
      const Complex u = std::polar(1.0, kPhases[i] * k);
      x(i, i) = u;
      x(i, i + m) = u;
    }
    x *= std::sqrt(p / 2.0);
    if (normalize_to_budget) {
      const double e = pilot_energy(x);
      if (e > 0.0) x *= std::sqrt(p / e);
    }
    pilots.push_back(std::move(x));
  }
  return pilots;
}

/// Mutually orthogonal pilots for L >= M: user k uses its own block of rows
/// of I_L scaled to energy p_k, so S^H S is diagonal.
inline std::vector<ComplexMatrix> orthogonal_pilots(const SystemConfig& cfg) {
  if (cfg.pilot_length < cfg.total_antennas)
    throw DimensionError("orthogonal pilots need L >= M");
  std::vector<ComplexMatrix> pilots;
  int row = 0;
  for (int k = 0; k < cfg.users; ++k) {
    const int m = cfg.user_antennas[k];
    ComplexMatrix x = ComplexMatrix::Zero(m, cfg.pilot_length);
    for (int i = 0; i < m; ++i) x(i, row + i) = std::sqrt(cfg.power_budgets[k] / m);
    row += m;
    pilots.push_back(std::move(x));
  }
  return pilots;
}

}  // namespace mumimo
