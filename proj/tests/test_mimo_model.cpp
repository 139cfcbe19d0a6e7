#include <gtest/gtest.h>

#include <vector>

#include "mumimo/mimo_model.hpp"
#include "mumimo/verify.hpp"

using namespace mumimo;

namespace {

ComplexMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  return random_complex(r, c, rng);
}

}  // namespace

TEST(SystemConfig, ComputesTotalAntennas) {
  const auto cfg = SystemConfig::make(4, {4, 2, 3}, 8, {1, 1, 1}, 0.1);
  EXPECT_EQ(cfg.total_antennas, 9);
  EXPECT_EQ(cfg.stacked_length(), 36);
  EXPECT_EQ(cfg.observation_length(), 32);
  EXPECT_EQ(cfg.channel_offset(2), 24);
}

TEST(SystemConfig, AllowsPilotShorterThanAntennaCount) {
  const auto cfg = SystemConfig::make(4, {4, 4, 4}, 8, {1, 1, 1}, 1.0);
  EXPECT_LT(cfg.pilot_length, cfg.total_antennas);
}

TEST(SystemConfig, RejectsBadDimensions) {
  EXPECT_THROW(SystemConfig::make(0, {1}, 1, {1}, 1), ConfigError);
  EXPECT_THROW(SystemConfig::make(1, {0}, 1, {1}, 1), ConfigError);
  EXPECT_THROW(SystemConfig::make(1, {1}, 0, {1}, 1), ConfigError);
  EXPECT_THROW(SystemConfig::make(1, {}, 1, {}, 1), ConfigError);
  EXPECT_THROW(SystemConfig::make(1, {1, 1}, 1, {1}, 1), ConfigError);
  EXPECT_THROW(SystemConfig::make(1, {1}, 1, {-1}, 1), ConfigError);
  EXPECT_THROW(SystemConfig::make(1, {1}, 1, {1}, 0), ConfigError);
}

TEST(Vec, ColumnMajorRoundTrip) {
  ComplexMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const ComplexVector v = vec(m);
  EXPECT_EQ(v(1), Complex(4));
  EXPECT_EQ(v(2), Complex(2));
  EXPECT_EQ(unvec(v, 2, 3), m);
  EXPECT_THROW(unvec(v, 4, 2), DimensionError);
}

TEST(SampleChannel, IdentityCovarianceHasUnitVariance) {
  const auto cfg = SystemConfig::make(2, {2}, 1, {1}, 1);
  ChannelSampler sampler(cfg, identity_covariances(cfg));
  Rng rng(11);
  const int draws = 100'000;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < draws; ++i) acc += sampler(rng).stacked.cwiseAbs2();
  for (int e = 0; e < 4; ++e) {
    const double var = acc(e) / draws;
    EXPECT_GE(var, 0.97);
    EXPECT_LE(var, 1.03);
  }
}

TEST(SampleChannel, ZeroCovarianceGivesZeroChannel) {
  const auto cfg = SystemConfig::make(2, {2}, 1, {1}, 1);
  const auto ch = sample_channel(cfg, {ComplexMatrix::Zero(4, 4)}, 5);
  EXPECT_TRUE((ch.stacked.array() == Complex(0)).all());
}

TEST(SampleChannel, DiagonalCovarianceScalesFirstEntry) {
  const auto cfg = SystemConfig::make(2, {1}, 1, {1}, 1);
  ComplexMatrix r = ComplexMatrix::Identity(2, 2);
  r(0, 0) = 4.0;
  ChannelSampler sampler(cfg, {r});
  Rng rng(12);
  const int draws = 100'000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) acc += std::norm(sampler(rng).stacked(0));
  EXPECT_NEAR(acc / draws, 4.0, 0.03 * 4.0);
}

TEST(SampleChannel, StackedIsConcatenationInUserOrder) {
  const auto cfg = SystemConfig::make(2, {1, 2}, 2, {1, 1}, 1);
  const auto ch = sample_channel(cfg, identity_covariances(cfg), 3);
  ASSERT_EQ(ch.stacked.size(), 6);
  EXPECT_EQ(ch.stacked.head(2), ch.per_user[0]);
  EXPECT_EQ(ch.stacked.tail(4), ch.per_user[1]);
}

TEST(SampleChannel, NonPsdCovarianceNamesUser) {
  const auto cfg = SystemConfig::make(1, {1, 1}, 1, {1, 1}, 1);
  std::vector<ComplexMatrix> covs = {ComplexMatrix::Identity(1, 1), -ComplexMatrix::Identity(1, 1)};
  try {
    sample_channel(cfg, covs, 1);
    FAIL() << "expected CovarianceError";
  } catch (const CovarianceError& e) {
    EXPECT_EQ(e.user(), 1);
  }
}

TEST(SampleChannel, NonHermitianCovarianceRejected) {
  const auto cfg = SystemConfig::make(1, {2}, 1, {1}, 1);
  ComplexMatrix r = ComplexMatrix::Identity(2, 2);
  r(0, 1) = 0.5;
  EXPECT_THROW(sample_channel(cfg, {r}, 1), CovarianceError);
}

TEST(SampleChannel, TinyNegativeEigenvalueClamped) {
  const auto cfg = SystemConfig::make(1, {2}, 1, {1}, 1);
  ComplexMatrix r = ComplexMatrix::Identity(2, 2);
  r(1, 1) = -1e-12;
  EXPECT_NO_THROW(sample_channel(cfg, {r}, 1));
}

TEST(SampleChannel, SeedDeterminesDraw) {
  const auto cfg = SystemConfig::make(3, {2, 1}, 2, {1, 1}, 1);
  const auto a = sample_channel(cfg, identity_covariances(cfg), 99);
  const auto b = sample_channel(cfg, identity_covariances(cfg), 99);
  const auto c = sample_channel(cfg, identity_covariances(cfg), 100);
  EXPECT_EQ(a.stacked, b.stacked);
  EXPECT_NE(a.stacked, c.stacked);
}

TEST(ExpandPilot, ScalarCase) {
  ComplexMatrix x(1, 1);
  x(0, 0) = Complex(0.3, -2.0);
  EXPECT_EQ(expand_pilot(x, 1), x);
}

TEST(ExpandPilot, ZeroInput) {
  const ComplexMatrix out = expand_pilot(ComplexMatrix::Zero(2, 3), 2);
  EXPECT_EQ(out.rows(), 6);
  EXPECT_EQ(out.cols(), 4);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(ExpandPilot, MatchesKroneckerDefinition) {
  const ComplexMatrix x = random_matrix(2, 3, 4);
  const int n = 2;
  const ComplexMatrix xt = x.transpose();
  ComplexMatrix oracle = ComplexMatrix::Zero(xt.rows() * n, xt.cols() * n);
  for (Eigen::Index a = 0; a < xt.rows(); ++a)
    for (Eigen::Index b = 0; b < xt.cols(); ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) oracle(a * n + i, b * n + j) = xt(a, b) * (i == j ? 1.0 : 0.0);
  EXPECT_EQ(expand_pilot(x, n), oracle);
  EXPECT_EQ(tying_violation(oracle, n), 0.0);
}

TEST(BuildStackedPilot, SingleUserIsExpansion) {
  const ComplexMatrix x = random_matrix(3, 2, 5);
  const std::vector<ComplexMatrix> p = {x};
  EXPECT_EQ(build_stacked_pilot(p, 3), expand_pilot(x, 3));
}

TEST(BuildStackedPilot, ZeroPilots) {
  const std::vector<ComplexMatrix> p = {ComplexMatrix::Zero(1, 2), ComplexMatrix::Zero(2, 2)};
  const ComplexMatrix s = build_stacked_pilot(p, 2);
  EXPECT_EQ(s.rows(), 4);
  EXPECT_EQ(s.cols(), 6);
  EXPECT_TRUE(s.isZero(0.0));
}

TEST(BuildStackedPilot, BlocksMatchExpansion) {
  const std::vector<ComplexMatrix> p = {random_matrix(2, 3, 6), random_matrix(1, 3, 7)};
  const ComplexMatrix s = build_stacked_pilot(p, 2);
  EXPECT_EQ(s.leftCols(4), expand_pilot(p[0], 2));
  EXPECT_EQ(s.rightCols(2), expand_pilot(p[1], 2));
}

TEST(BuildStackedPilot, MismatchedLengthThrows) {
  const std::vector<ComplexMatrix> p = {ComplexMatrix::Zero(1, 2), ComplexMatrix::Zero(1, 3)};
  EXPECT_THROW(build_stacked_pilot(p, 2), DimensionError);
  EXPECT_THROW(build_stacked_pilot({}, 2), DimensionError);
}

TEST(SimulateReception, ZeroChannelZeroNoise) {
  const auto cfg = SystemConfig::make(2, {2, 1}, 3, {1, 1}, 1);
  const std::vector<ComplexMatrix> p = {random_matrix(2, 3, 1), random_matrix(1, 3, 2)};
  auto ch = sample_channel(cfg, {ComplexMatrix::Zero(4, 4), ComplexMatrix::Zero(2, 2)}, 1);
  const auto rx = simulate_reception(p, ch, ComplexVector::Zero(6), cfg);
  EXPECT_TRUE(rx.vector_form.isZero(0.0));
  EXPECT_TRUE(rx.matrix_form.isZero(0.0));
}

TEST(SimulateReception, IdentityPilotPassesChannelThrough) {
  const auto cfg = SystemConfig::make(1, {3}, 3, {3}, 1);
  const std::vector<ComplexMatrix> p = {ComplexMatrix::Identity(3, 3)};
  const auto ch = sample_channel(cfg, identity_covariances(cfg), 8);
  const auto rx = simulate_reception(p, ch, ComplexVector::Zero(3), cfg);
  EXPECT_EQ(rx.vector_form, ch.stacked);
}

TEST(SimulateReception, MatrixAndVectorFormsAgree) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cfg = SystemConfig::make(3, {2, 4, 1}, 5, {1, 1, 1}, 0.2);
    const std::vector<ComplexMatrix> p = {random_matrix(2, 5, seed), random_matrix(4, 5, seed + 50),
                                          random_matrix(1, 5, seed + 100)};
    const auto ch = sample_channel(cfg, identity_covariances(cfg), seed);
    const auto rx = simulate_reception(p, ch, cfg, seed + 7);
    const double rel = (vec(rx.matrix_form) - rx.vector_form).norm() / rx.vector_form.norm();
    EXPECT_LE(rel, 1e-12);
  }
}

TEST(SimulateReception, ShapeMismatchThrows) {
  const auto cfg = SystemConfig::make(2, {2}, 3, {1}, 1);
  const auto ch = sample_channel(cfg, identity_covariances(cfg), 1);
  const std::vector<ComplexMatrix> wrong = {ComplexMatrix::Zero(2, 2)};
  EXPECT_THROW(simulate_reception(wrong, ch, ComplexVector::Zero(6), cfg), DimensionError);
  const std::vector<ComplexMatrix> ok = {ComplexMatrix::Zero(2, 3)};
  EXPECT_THROW(simulate_reception(ok, ch, ComplexVector::Zero(5), cfg), DimensionError);
}

TEST(SampleNoise, VarianceMatchesConfig) {
  const auto cfg = SystemConfig::make(50, {1}, 40, {1}, 0.25);
  const ComplexVector z = sample_noise(cfg, 3);
  EXPECT_NEAR(z.squaredNorm() / z.size(), 0.25, 0.025);
}

TEST(PilotEnergy, Examples) {
  EXPECT_EQ(pilot_energy(ComplexMatrix::Zero(3, 4)), 0.0);
  EXPECT_EQ(pilot_energy(ComplexMatrix::Identity(2, 2)), 2.0);
  const ComplexMatrix x = random_matrix(3, 5, 21);
  double oracle = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) oracle += x(i, j).real() * x(i, j).real() + x(i, j).imag() * x(i, j).imag();
  EXPECT_NEAR(pilot_energy(x), oracle, 1e-12 * oracle);
}
