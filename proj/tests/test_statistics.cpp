#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "perfowave/errors.hpp"
#include "perfowave/statistics.hpp"

namespace perfowave {
namespace {

double brute_energy_distance(const std::vector<double>& a, const std::vector<double>& b) {
  auto mean_abs = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (double p : x)
      for (double q : y) s += std::abs(p - q);
    return s / static_cast<double>(x.size() * y.size());
  };
  return 2 * mean_abs(a, b) - mean_abs(a, a) - mean_abs(b, b);
}

std::vector<double> normals(int n, double mu, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(mu, 1.0);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = d(rng);
  return x;
}

TEST(EnergyDistance, SimpleValues) {
  const std::vector<double> a{0, 0}, b{1, 1};
  EXPECT_DOUBLE_EQ(energy_distance(a, b), 2.0);
  const auto x = normals(50, 0, 1);
  EXPECT_EQ(energy_distance(x, x), 0.0);
}

TEST(EnergyDistance, MatchesQuadraticFormula) {
  const auto a = normals(137, 0.0, 2), b = normals(91, 0.4, 3);
  EXPECT_NEAR(energy_distance(a, b), brute_energy_distance(a, b), 1e-12);
  double s = 0.0;
  for (double p : a)
    for (double q : b) s += std::abs(p - q);
  EXPECT_NEAR(mean_abs_difference(a, b), s / static_cast<double>(a.size() * b.size()), 1e-12);
}

TEST(EnergyDistance, EmptySampleThrows) {
  const std::vector<double> a, b{1.0};
  EXPECT_THROW(energy_distance(a, b), ValidationError);
}

TEST(EnergyDistance, SameLawIsNotSignificant) {
  const auto a = normals(10000, 0.0, 4), b = normals(10000, 0.0, 5);
  EXPECT_GT(permutation_p_value(a, b, energy_distance, 199, 11), 0.05);
}

TEST(EnergyDistance, ShiftedLawIsSignificant) {
  const auto a = normals(400, 0.0, 6), b = normals(400, 0.5, 7);
  EXPECT_LT(permutation_p_value(a, b, energy_distance, 199, 12), 0.01);
}

TEST(KolmogorovSmirnov, KnownValues) {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  EXPECT_DOUBLE_EQ(ks_statistic(a, b), 1.0);
  EXPECT_DOUBLE_EQ(ks_statistic(a, a), 0.0);
  const std::vector<double> c{1, 2, 3, 4}, d{3, 4, 5, 6};
  EXPECT_DOUBLE_EQ(ks_statistic(c, d), 0.5);
}

TEST(Bootstrap, StandardErrorOfMeanDifference) {
  const auto a = normals(400, 0.0, 8), b = normals(400, 0.0, 9);
  const TwoSampleStatistic diff = [](std::span<const double> x, std::span<const double> y) {
    return sample_mean(x) - sample_mean(y);
  };
  // analytic value sqrt(1/400 + 1/400)
  EXPECT_NEAR(bootstrap_standard_error(a, b, diff, 400, 3), std::sqrt(2.0 / 400), 0.2 * std::sqrt(2.0 / 400));
}

TEST(Bootstrap, Deterministic) {
  const auto a = normals(60, 0.0, 10), b = normals(60, 0.3, 11);
  EXPECT_EQ(bootstrap_standard_error(a, b, energy_distance, 100, 7),
            bootstrap_standard_error(a, b, energy_distance, 100, 7));
}

TEST(Moments, MeanAndVariance) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(sample_mean(x), 2.5);
  EXPECT_DOUBLE_EQ(sample_variance(x), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(sample_variance(std::vector<double>{3.0}), 0.0);
}

}  // namespace
}  // namespace perfowave
