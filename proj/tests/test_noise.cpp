#include <gtest/gtest.h>

#include <cmath>

#include "perfowave/errors.hpp"
#include "perfowave/geometry.hpp"
#include "perfowave/noise.hpp"

namespace perfowave {
namespace {

TEST(Philox, KnownAnswerZeroCounterZeroKey) {
  // Random123 kat_vectors, philox4x32_10 with all-zero input
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, UniformStaysInOpenInterval) {
  for (std::uint32_t i = 0; i < 10000; ++i) {
    const double u = counter_uniform(99, {i, 0, 0, 0});
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Covariance, Traces) {
  EXPECT_DOUBLE_EQ(trace(CovarianceSpec::zero(1)), 0.0);
  EXPECT_NEAR(trace(CovarianceSpec::power_law(3, 0.5, 2.0)), 0.5 * (1 + 0.25 + 1.0 / 9), 1e-15);
  EXPECT_NEAR(trace(CovarianceSpec::from_list({0.2, 0.1})), 0.3, 1e-15);
}

TEST(Covariance, NegativeEigenvalueNamesField) {
  try {
    CovarianceSpec::from_list({0.2, -0.1}).validate("noise1");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field().rfind("noise1", 0), 0u);
  }
}

TEST(WienerSampler, ZeroCovarianceGivesZeroField) {
  const auto dom = build_box_domain(make_box({0, 0}, {1, 1}), 1.0 / 16);
  WienerSampler w(CovarianceSpec::zero(4), 1, {0, 1});
  EXPECT_TRUE(sample_increment(w, 0.1, dom.grid).isZero(0.0));
}

TEST(WienerSampler, SingleModeVariance) {
  const double dt = 0.01;
  const int n = 10000;
  WienerSampler w(CovarianceSpec::from_list({1.0}), 3, {0, 1});
  double s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = w.next_coefficients(dt)[0];
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double var = s2 / n;
  const double se = std::sqrt((s4 / n - var * var) / n);
  EXPECT_NEAR(var, dt, 5 * se);
}

TEST(WienerSampler, ExpectedSquaredNormIsTrace) {
  const auto spec = CovarianceSpec::power_law(8, 0.5, 2.0);
  const int n = 10000;
  std::vector<double> norms;
  for (int k = 0; k < n; ++k) {
    WienerSampler w(spec, 17, {static_cast<std::uint32_t>(k), 1});
    norms.push_back(w.next_coefficients(1.0).squaredNorm());
  }
  double mean = 0.0, m2 = 0.0;
  for (double x : norms) mean += x / n;
  for (double x : norms) m2 += (x - mean) * (x - mean) / (n - 1);
  EXPECT_NEAR(mean, trace(spec), 5 * std::sqrt(m2 / n));
}

TEST(WienerSampler, ModesAreUncorrelated) {
  const int n = 10000, m = 4;
  WienerSampler w(CovarianceSpec::from_list({1, 1, 1, 1}), 8, {2, 1});
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = w.standard_normals(static_cast<std::uint32_t>(i));
    C += xi * xi.transpose() / n;
  }
  // entrywise standard error is about 1/sqrt(n), sqrt(2/n) on the diagonal
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) EXPECT_NEAR(C(i, j), i == j ? 1.0 : 0.0, 5 * std::sqrt((i == j ? 2.0 : 1.0) / n));
}

TEST(WienerSampler, IncrementsAreAddressableByStep) {
  const auto spec = CovarianceSpec::power_law(6, 0.5, 2.0);
  WienerSampler a(spec, 5, {3, 2});
  a.next_coefficients(0.1);
  const Eigen::VectorXd second = a.next_coefficients(0.1);
  WienerSampler b(spec, 5, {3, 2});
  b.reset(1);
  EXPECT_EQ(b.next_coefficients(0.1), second);
  WienerSampler other(spec, 5, {4, 2});
  other.reset(1);
  EXPECT_NE(other.next_coefficients(0.1), second);
}

TEST(SineBasis, DiscretelyOrthonormal) {
  const auto dom = build_box_domain(make_box({0, 0}, {1, 1}), 1.0 / 32);
  const Eigen::MatrixXd B = sine_basis_on_grid(dom.grid, 6);
  const Eigen::MatrixXd G = B.transpose() * dom.grid.node_weights().asDiagonal() * B;
  EXPECT_TRUE(G.isApprox(Eigen::MatrixXd::Identity(6, 6), 1e-10));
}

TEST(Restrict, LinearAndIndicatorIsOnes) {
  const auto dom = build_perforated_domain(make_box({0, 0}, {1, 1}), 0.25,
                                           UnitCellSpec::unit_square(make_box({0.25, 0.25}, {0.75, 0.75})), 1.0 / 32);
  const auto& g = dom.grid;
  EXPECT_TRUE(restrict_to_fluid(Eigen::VectorXd::Zero(g.node_count()), g).isZero(0.0));
  EXPECT_EQ(restrict_to_fluid(indicator_field(g), g), Eigen::VectorXd::Ones(g.fluid_count()));
  const Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(g.node_count(), -1.0, 2.0);
  EXPECT_EQ(restrict_to_fluid(2 * f, g), 2 * restrict_to_fluid(f, g));
  EXPECT_EQ(restrict_to_boundary(2 * f, dom.boundary), 2 * restrict_to_boundary(f, dom.boundary));
}

}  // namespace
}  // namespace perfowave
