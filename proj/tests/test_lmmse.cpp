#include <gtest/gtest.h>

#include <numbers>
#include <vector>

#include "mumimo/lmmse.hpp"
#include "mumimo/trainer.hpp"
#include "mumimo/verify.hpp"

using namespace mumimo;

namespace {

ComplexMatrix random_pd(Eigen::Index n, Rng& rng) {
  const ComplexMatrix a = random_complex(n, n, rng);
  return a * a.adjoint() + 0.5 * ComplexMatrix::Identity(n, n);
}

ComplexMatrix white(Eigen::Index n, double var) { return var * ComplexMatrix::Identity(n, n); }

}  // namespace

TEST(BuildLmmse, ZeroPilotsGiveZeroEstimator) {
  const auto cfg = SystemConfig::make(2, {2, 1}, 3, {1, 1}, 0.1);
  const std::vector<ComplexMatrix> p = {ComplexMatrix::Zero(2, 3), ComplexMatrix::Zero(1, 3)};
  const auto est = build_lmmse(p, identity_covariances(cfg), white(6, 0.1));
  for (const auto& d : est.per_user) EXPECT_TRUE(d.isZero(0.0));
}

TEST(BuildLmmse, ScalarWienerGain) {
  const double p = 2.0, s2 = 0.3;
  ComplexMatrix u = ComplexMatrix::Zero(2, 3);
  u(0, 0) = 1.0;
  u(1, 2) = Complex(0, 1);
  const ComplexMatrix x = std::sqrt(p) * u;
  const std::vector<ComplexMatrix> pilots = {x};
  const std::vector<ComplexMatrix> covs = {ComplexMatrix::Identity(2, 2)};
  const auto est = build_lmmse(pilots, covs, white(3, s2));
  const ComplexMatrix expected = std::sqrt(p) / (p + s2) * expand_pilot(u, 1).adjoint();
  EXPECT_LE((est.stacked - expected).norm(), 1e-12);
}

TEST(BuildLmmse, MatchesConditionalMeanFormula) {
  Rng rng(31);
  const int n = 2, l = 2;
  const std::vector<ComplexMatrix> pilots = {random_complex(2, l, rng), random_complex(2, l, rng)};
  const std::vector<ComplexMatrix> covs = {random_pd(4, rng), random_pd(4, rng)};
  const ComplexMatrix cz = random_pd(n * l, rng);
  const auto est = build_lmmse(pilots, covs, cz);

  const ComplexMatrix s = build_stacked_pilot(pilots, n);
  const ComplexMatrix ch = block_diagonal(covs);
  const ComplexMatrix cgy = ch * s.adjoint();
  const ComplexMatrix cyy = s * ch * s.adjoint() + cz;
  const ComplexMatrix oracle = cgy * cyy.inverse();
  EXPECT_LE((est.stacked - oracle).norm() / oracle.norm(), 1e-12);
  EXPECT_EQ(est.channel_covariance.topLeftCorner(4, 4), covs[0]);
  EXPECT_TRUE(est.channel_covariance.topRightCorner(4, 4).isZero(0.0));
  EXPECT_EQ(est.stacked.topRows(4), est.per_user[0]);
  EXPECT_EQ(est.stacked.bottomRows(4), est.per_user[1]);
}

TEST(BuildLmmse, SingularNoiseCovarianceThrows) {
  const std::vector<ComplexMatrix> pilots = {ComplexMatrix::Zero(1, 2)};
  const std::vector<ComplexMatrix> covs = {ComplexMatrix::Identity(1, 1)};
  EXPECT_THROW(build_lmmse(pilots, covs, ComplexMatrix::Zero(2, 2)), SingularMatrixError);
}

TEST(LmmseEstimate, ZeroObservation) {
  const auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 1, 1}, 0.01);
  const auto pilots = heuristic_pilots(cfg);
  const auto est = build_lmmse(pilots, identity_covariances(cfg), white(32, 0.01));
  EXPECT_TRUE(lmmse_estimate(est, ComplexVector::Zero(32)).isZero(0.0));
}

TEST(LmmseEstimate, IdentityEstimatorPassesThrough) {
  LmmseEstimator est;
  est.stacked = ComplexMatrix::Identity(3, 3);
  Rng rng(1);
  const ComplexVector y = random_complex(3, 1, rng);
  EXPECT_EQ(lmmse_estimate(est, y), y);
}

TEST(LmmseEstimate, MatchesRowDotProducts) {
  Rng rng(2);
  LmmseEstimator est;
  est.stacked = random_complex(5, 4, rng);
  const ComplexVector y = random_complex(4, 1, rng);
  const ComplexVector got = lmmse_estimate(est, y);
  for (Eigen::Index r = 0; r < 5; ++r) {
    Complex acc = 0.0;
    for (Eigen::Index c = 0; c < 4; ++c) acc += est.stacked(r, c) * y(c);
    EXPECT_NEAR(std::abs(got(r) - acc), 0.0, 1e-12);
  }
  EXPECT_THROW(lmmse_estimate(est, ComplexVector::Zero(3)), DimensionError);
}

TEST(LmmseMse, ZeroPilotsGivePriorTrace) {
  const auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 1, 1}, 1.0);
  const std::vector<ComplexMatrix> p(3, ComplexMatrix::Zero(4, 8));
  EXPECT_NEAR(lmmse_mse_closed_form(p, identity_covariances(cfg), white(32, 1.0)), 48.0, 1e-12);
}

TEST(LmmseMse, ScalarWiener) {
  const double p = 3.0, s2 = 0.5;
  const std::vector<ComplexMatrix> pilots = {std::sqrt(p) * ComplexMatrix::Identity(1, 1)};
  const std::vector<ComplexMatrix> covs = {ComplexMatrix::Identity(1, 1)};
  EXPECT_NEAR(lmmse_mse_closed_form(pilots, covs, white(1, s2)), s2 / (s2 + p), 1e-14);
}

TEST(LmmseMse, SingularPriorThrowsAndFallsBack) {
  Rng rng(4);
  const std::vector<ComplexMatrix> pilots = {random_complex(2, 3, rng)};
  ComplexMatrix r = ComplexMatrix::Identity(2, 2);
  r(1, 1) = 0.0;
  const std::vector<ComplexMatrix> covs = {r};
  EXPECT_THROW(lmmse_mse_closed_form(pilots, covs, white(3, 0.2)), SingularMatrixError);
  const double fallback = lmmse_mse(pilots, covs, white(3, 0.2));
  EXPECT_GT(fallback, 0.0);
  EXPECT_LT(fallback, 1.0);
}

TEST(LmmseMse, EstimatorFormMatchesClosedForm) {
  Rng rng(5);
  const std::vector<ComplexMatrix> pilots = {random_complex(2, 3, rng), random_complex(1, 3, rng)};
  const std::vector<ComplexMatrix> covs = {random_pd(4, rng), random_pd(2, rng)};
  const ComplexMatrix cz = white(6, 0.3);
  const double closed = lmmse_mse_closed_form(pilots, covs, cz);
  const double alt = lmmse_mse_from_estimator(build_lmmse(pilots, covs, cz), pilots);
  EXPECT_NEAR(alt, closed, 1e-10 * closed);
}

TEST(LmmseMse, MonteCarloAgreesAtTwentyFiveDb) {
  auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 1, 1}, 1.0);
  cfg = realize_snr(cfg, TrainConfig{}, 25.0);
  const auto pilots = heuristic_pilots(cfg);
  const auto covs = identity_covariances(cfg);
  const ComplexMatrix cz = white(32, cfg.noise_variance);
  const double closed = lmmse_mse_closed_form(pilots, covs, cz);
  const double mc = lmmse_mse_monte_carlo(build_lmmse(pilots, covs, cz), pilots, cfg, covs, 100'000, 7);
  EXPECT_LE(std::abs(mc - closed) / closed, 0.02);
}

TEST(LmmseMse, MonteCarloNeedsSamples) {
  const auto cfg = SystemConfig::make(1, {1}, 1, {1}, 1);
  const std::vector<ComplexMatrix> p = {ComplexMatrix::Identity(1, 1)};
  const auto covs = identity_covariances(cfg);
  EXPECT_THROW(lmmse_mse_monte_carlo(build_lmmse(p, covs, white(1, 1)), p, cfg, covs, 0, 1),
               std::invalid_argument);
}

TEST(HeuristicPilots, FirstUserIsRepeatedIdentity) {
  const auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 1, 1}, 1);
  const auto p = heuristic_pilots(cfg);
  ComplexMatrix expected(4, 8);
  expected << ComplexMatrix::Identity(4, 4), ComplexMatrix::Identity(4, 4);
  expected *= std::sqrt(0.5);
  EXPECT_LE((p[0] - expected).norm(), 1e-15);
}

TEST(HeuristicPilots, SecondUserPhases) {
  const auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 1, 1}, 1);
  const auto p = heuristic_pilots(cfg);
  const double pi = std::numbers::pi;
  const double phases[] = {0.0, pi, 5 * pi / 6, 2 * pi / 3};
  for (int i = 0; i < 4; ++i) {
    const Complex u = std::polar(1.0, phases[i]) * std::sqrt(0.5);
    EXPECT_NEAR(std::abs(p[1](i, i) - u), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(p[1](i, i + 4) - u), 0.0, 1e-15);
  }
  // Third user uses the squared phases.
  EXPECT_NEAR(std::abs(p[2](2, 2) - std::polar(std::sqrt(0.5), 2 * 5 * pi / 6)), 0.0, 1e-15);
}

TEST(HeuristicPilots, LiteralEnergyAndFairNormalization) {
  const auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 2, 0.5}, 1);
  const auto literal = heuristic_pilots(cfg, false);
  const auto fair = heuristic_pilots(cfg, true);
  EXPECT_NEAR(pilot_energy(literal[0]), 4.0, 1e-12);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(pilot_energy(literal[k]), 4.0 * cfg.power_budgets[k], 1e-12);
    EXPECT_NEAR(pilot_energy(fair[k]), cfg.power_budgets[k], 1e-12);
  }
}

TEST(HeuristicPilots, UnsupportedShapesThrow) {
  EXPECT_THROW(heuristic_pilots(SystemConfig::make(2, {4}, 7, {1}, 1)), DimensionError);
  EXPECT_THROW(heuristic_pilots(SystemConfig::make(2, {5}, 10, {1}, 1)), DimensionError);
  EXPECT_NO_THROW(heuristic_pilots(SystemConfig::make(2, {2, 2}, 4, {1, 1}, 1)));
}

TEST(OrthogonalPilots, MatchesDiagonalTraceFormula) {
  const auto cfg = SystemConfig::make(3, {2, 1}, 4, {1.5, 0.7}, 0.2);
  const auto pilots = orthogonal_pilots(cfg);
  const ComplexMatrix s = build_stacked_pilot(pilots, 3);
  const ComplexMatrix gram = s.adjoint() * s;
  EXPECT_LE((gram - ComplexMatrix(gram.diagonal().asDiagonal())).norm(), 1e-14);
  double oracle = 0.0;
  for (int k = 0; k < cfg.users; ++k) {
    const double per_antenna = cfg.power_budgets[k] / cfg.user_antennas[k];
    oracle += cfg.bs_antennas * cfg.user_antennas[k] * cfg.noise_variance / (cfg.noise_variance + per_antenna);
  }
  const double got = lmmse_mse(pilots, identity_covariances(cfg), white(12, 0.2));
  EXPECT_NEAR(got, oracle, 1e-12 * oracle);
  EXPECT_THROW(orthogonal_pilots(SystemConfig::make(1, {2, 2}, 3, {1, 1}, 1)), DimensionError);
}

TEST(MonteCarloTolerance, ScalesWithSampleCount) {
  EXPECT_DOUBLE_EQ(monte_carlo_tolerance(100'000), 0.02);
  EXPECT_NEAR(monte_carlo_tolerance(10'000) / 0.02, std::sqrt(10.0), 1e-12);
}
