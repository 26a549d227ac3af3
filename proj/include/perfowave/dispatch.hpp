#pragma once

// Subcommand pipelines behind the command-line front end.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "perfowave/config.hpp"
#include "perfowave/io.hpp"

namespace perfowave {

struct CliOptions {
  std::string command;  ///< cell, micro, macro, energy-check, converge
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "perfowave_out";
  std::size_t threads = 0;  ///< 0: PERFOWAVE_THREADS, then hardware concurrency
  std::optional<std::vector<double>> eps_list;
  std::optional<TensorVariant> variant;
  std::optional<std::filesystem::path> tensor;
};

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand.  Outputs, error.json on failure and manifest.json
/// (always) go to the output directory: `out` itself, or its parent when
/// `out` names a .json file.
int dispatch(const CliOptions& options, std::ostream& log);

std::size_t resolve_threads(std::size_t requested);

/// A_star.json content: both variants per spacing, porosity, the
/// Richardson-extrapolated gradient-form tensor and the selected tensor.
Json cell_report(const RunConfig& config, TensorVariant selected);
/// Tensor and porosity from an A_star.json document.
EffectiveTensor tensor_from_report(const Json& report);

struct EnergyCheckResult {
  std::vector<double> dt;
  std::vector<double> residual_T;   ///< |residual| at T per dt, no noise
  std::vector<double> max_residual; ///< max over t of |residual| per dt
  std::vector<double> orders;       ///< observed orders between consecutive dt
  double threshold = 0.0;
  bool deterministic_pass = false;

  std::size_t paths = 0;            ///< stochastic part, 0 when skipped
  std::vector<double> times;
  std::vector<double> mean_residual;
  std::vector<double> standard_error;
  bool stochastic_pass = true;
};

/// Deterministic self-convergence of the pseudo-energy identity over the
/// configured dt list, plus the expected identity over an ensemble when
/// `energy_check.paths` > 0.
EnergyCheckResult energy_check(const RunConfig& config, std::size_t threads);
Json to_json(const EnergyCheckResult& result);

/// u0 = amplitude * prod_a sin(pi (x_a - lower_a) / L_a) at grid nodes.
Eigen::VectorXd first_mode_field(const StructuredGrid& grid, double amplitude);

}  // namespace perfowave
