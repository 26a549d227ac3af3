#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "perfowave/convergence_lab.hpp"
#include "perfowave/errors.hpp"
#include "perfowave/io.hpp"
#include "perfowave/statistics.hpp"

namespace perfowave {
namespace {

UnitCellSpec centred_hole() { return UnitCellSpec::unit_square(make_box({0.25, 0.25}, {0.75, 0.75})); }

EnsembleSpec small_spec() {
  EnsembleSpec s;
  s.domain = make_box({0, 0}, {1, 1});
  s.eps_list = {0.5, 0.25};
  s.paths = 30;
  s.T = 0.25;
  s.h_over_eps = 1.0 / 8;
  s.dt_over_eps = 1.0 / 4;
  s.threads = 2;
  s.bootstrap_replicates = 50;
  s.mean_field_blocks = 4;
  s.mean_field_outputs = 2;
  return s;
}

EffectiveTensor isotropic(double a, double nu) {
  EffectiveTensor t;
  t.matrix = a * Eigen::MatrixXd::Identity(2, 2);
  t.porosity = nu;
  return t;
}

std::vector<double> column(const std::vector<FunctionalSample>& s, int j) {
  std::vector<double> out;
  for (const auto& x : s) out.push_back(x.J[static_cast<std::size_t>(j)]);
  return out;
}

TEST(EnsembleSpec, Validation) {
  auto s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.paths = 10;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.eps_list = {0.25, 0.5};
  try {
    s.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field().rfind("ensemble.", 0), 0u);
  }
}

TEST(TrendCheck, ToleratesNoiseWithinTwoStandardErrors) {
  EXPECT_TRUE(trend_nonincreasing({3, 2, 1}, {0, 0, 0}));
  EXPECT_FALSE(trend_nonincreasing({1, 2}, {0.1, 0.1}));
  EXPECT_TRUE(trend_nonincreasing({1, 1.2}, {0.1, 0.1}));  // 0.2 <= 2 sqrt(0.02)
}

TEST(ParallelFor, CoversEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 3, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Study, SelfDistanceIsZero) {
  const auto rep = run_study(small_spec(), centred_hole(), isotropic(0.58, 0.75));
  for (const auto& level : rep.levels) {
    for (int j = 0; j < kFunctionalCount; ++j) {
      const auto m = column(level.micro, j);
      EXPECT_EQ(energy_distance(m, m), 0.0);
      EXPECT_EQ(ks_statistic(m, m), 0.0);
    }
  }
  EXPECT_TRUE(rep.valid);
  EXPECT_EQ(rep.excluded_paths, 0u);
}

TEST(Study, DeterministicAcrossThreadCounts) {
  auto a = small_spec(), b = small_spec();
  a.threads = 1;
  b.threads = 3;
  const auto ra = run_study(a, centred_hole(), isotropic(0.58, 0.75));
  const auto rb = run_study(b, centred_hole(), isotropic(0.58, 0.75));
  EXPECT_EQ(report_to_json(ra, a).dump(), report_to_json(rb, a).dump());
}

TEST(Study, HoleFreeCaseMatchesNull) {
  auto s = small_spec();
  s.null_calibration = true;
  const auto rep = run_study(s, UnitCellSpec::unit_square(), EffectiveTensor::identity(2));
  for (const auto& level : rep.levels) {
    ASSERT_TRUE(level.has_null);
    for (int j = 0; j < kFunctionalCount; ++j) {
      const auto& d = level.distance[static_cast<std::size_t>(j)];
      const auto& n = level.null[static_cast<std::size_t>(j)];
      EXPECT_LE(d.energy, n.null + 2 * std::sqrt(d.energy_se * d.energy_se + n.null_se * n.null_se));
    }
  }
}

TEST(Study, CommonRandomNumbersReduceGapVariance) {
  auto crn = small_spec(), ind = small_spec();
  crn.eps_list = {0.25};
  ind.eps_list = {0.25};
  crn.null_calibration = ind.null_calibration = false;
  ind.common_random_numbers = false;
  auto gap_variance = [](const LevelReport& l) {
    std::vector<double> g;
    for (std::size_t k = 0; k < l.micro.size(); ++k) g.push_back(l.micro[k].J[0] - l.macro[k].J[0]);
    return sample_variance(g);
  };
  const auto a = run_study(crn, centred_hole(), isotropic(0.58, 0.75));
  const auto b = run_study(ind, centred_hole(), isotropic(0.58, 0.75));
  EXPECT_LT(gap_variance(a.levels[0]), gap_variance(b.levels[0]));
}

}  // namespace
}  // namespace perfowave
