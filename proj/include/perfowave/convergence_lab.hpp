#pragma once

// Matched micro/macro Monte Carlo ensembles over a decreasing eps sequence,
// compared through scalar path functionals of the zero-extended solution:
//
//   J1 = int_0^T ||u~(t)||^2 dt,   J2 = <u~(T), g>,   J3 = int_0^T <u~(t), g> dt
//
// with the probe g(x) = prod_a sin(pi (x_a - lower_a) / L_a).

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "perfowave/cell_homog.hpp"
#include "perfowave/geometry.hpp"
#include "perfowave/noise.hpp"
#include "perfowave/wave_stepper.hpp"

namespace perfowave {

struct EnsembleSpec {
  Box domain;
  std::vector<double> eps_list;  ///< strictly decreasing
  std::size_t paths = 64;
  double T = 1.0;
  double h_over_eps = 1.0 / 16.0;   ///< h = eps * h_over_eps
  double dt_over_eps = 1.0 / 8.0;   ///< dt = eps * dt_over_eps
  CovarianceSpec noise1;
  CovarianceSpec noise2;
  std::uint64_t seed = 42;
  bool common_random_numbers = true;  ///< micro and macro path k share W1
  bool null_calibration = true;
  StepperFlags flags;
  CgOptions cg;
  std::size_t threads = 0;            ///< 0 = hardware concurrency
  int bootstrap_replicates = 200;
  int mean_field_blocks = 16;         ///< blocks per axis for the mean-field gap
  int mean_field_outputs = 8;         ///< time samples of the mean field (plus t = 0)

  /// Throws ConfigError with field paths under `ensemble.`.
  void validate() const;
};

constexpr int kFunctionalCount = 3;
const std::array<std::string, kFunctionalCount>& functional_names();

struct FunctionalSample {
  std::size_t path = 0;
  std::array<double, kFunctionalCount> J{};
};

struct FunctionalDistance {
  double energy = 0.0;
  double energy_se = 0.0;
  double ks = 0.0;
};

struct NullCheck {
  double cross = 0.0;     ///< hole-free micro vs identity macro, independent streams
  double cross_se = 0.0;
  double null = 0.0;      ///< two independent identity-macro ensembles
  double null_se = 0.0;
  bool pass = false;
};

struct LevelReport {
  double eps = 0.0;
  double h = 0.0;
  double dt = 0.0;
  std::size_t holes = 0;
  std::vector<FunctionalSample> micro;
  std::vector<FunctionalSample> macro;
  std::size_t excluded_micro = 0;
  std::size_t excluded_macro = 0;
  std::array<FunctionalDistance, kFunctionalCount> distance{};
  double mean_field_gap = 0.0;
  double mean_field_noise_floor = 0.0;
  bool has_null = false;
  std::array<NullCheck, kFunctionalCount> null{};
};

struct DistanceReport {
  Eigen::MatrixXd tensor;
  double nu = 1.0;
  std::vector<LevelReport> levels;
  /// D_{k+1} <= D_k + 2 sqrt(SE_k^2 + SE_{k+1}^2) for every consecutive pair.
  std::array<bool, kFunctionalCount> trend_nonincreasing{};
  bool null_ok = true;
  bool valid = true;  ///< false when more than 5% of the paths were excluded
  std::size_t total_paths = 0;
  std::size_t excluded_paths = 0;
};

/// Wall-clock seconds per level, kept apart from the report so that the
/// report itself is reproducible bit for bit.
struct StudyTiming {
  std::vector<double> level_seconds;
  double total_seconds = 0.0;
};

DistanceReport run_study(const EnsembleSpec& spec, const UnitCellSpec& cell, const EffectiveTensor& tensor,
                         StudyTiming* timing = nullptr);

/// Trend verdict for one distance sequence.
bool trend_nonincreasing(const std::vector<double>& d, const std::vector<double>& se);

/// Runs `count` independent tasks on `threads` workers; task i writes only
/// to slot i of its own output, so results do not depend on scheduling.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task);

}  // namespace perfowave
