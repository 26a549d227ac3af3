#pragma once

// Run configuration: TOML input, full validation before any compute.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perfowave/cell_homog.hpp"
#include "perfowave/convergence_lab.hpp"
#include "perfowave/geometry.hpp"
#include "perfowave/macro_solver.hpp"
#include "perfowave/micro_solver.hpp"
#include "perfowave/noise.hpp"

namespace perfowave {

inline constexpr const char* kFormatVersion = "1";

struct FieldError {
  std::string field;
  std::string message;
};

/// Every validation problem found in a configuration, not just the first.
class ConfigErrors : public std::runtime_error {
public:
  explicit ConfigErrors(std::vector<FieldError> errors);
  const std::vector<FieldError>& errors() const noexcept { return errors_; }

private:
  std::vector<FieldError> errors_;
};

/// Initial data: u0 = u_amplitude * e_1, v0 = v_amplitude * e_1 with e_1 the
/// first sine mode of D (unnormalised, peak 1), constant delta0 and theta0.
struct InitialData {
  double u_amplitude = 0.0;
  double v_amplitude = 0.0;
  double delta0 = 0.0;
  double theta0 = 0.0;
};

struct CellSolverConfig {
  std::vector<double> spacings{1.0 / 64, 1.0 / 128, 1.0 / 256};
  TensorVariant variant = TensorVariant::GradientForm;
  double tolerance = 1e-12;
};

struct EnergyCheckConfig {
  std::vector<double> dt_list{1.0 / 64, 1.0 / 128, 1.0 / 256};
  double threshold = 1e-2;  ///< max |residual| allowed at the finest dt
  std::size_t paths = 0;     ///< stochastic expected-identity check when > 0
};

struct RunConfig {
  std::string format_version = kFormatVersion;
  std::uint64_t seed = 42;
  Box domain;
  UnitCellSpec cell;
  double eps = 0.25;
  double h = 1.0 / 64;
  CovarianceSpec noise1;
  CovarianceSpec noise2;
  MicroStepperConfig stepper;
  std::size_t snapshot_stride = 0;  ///< 0 = no state snapshots
  double r = 0.0;
  InitialData initial;
  CellSolverConfig cell_solver;
  EnsembleSpec ensemble;
  EnergyCheckConfig energy_check;
  MacroScaling macro_scaling = MacroScaling::DerivedConsistent;
  std::string source_text;             ///< verbatim configuration
  std::vector<std::string> warnings;   ///< non-fatal findings (e.g. r too large)
};

/// Throws ConfigErrors (semantic problems, all collected) or ConfigError
/// (syntax, with the line number).
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_string(const std::string& text, const std::string& source_name = "<string>");

/// Re-runs the cross-field checks, e.g. after command-line overrides.
void validate_config(const RunConfig& config);

}  // namespace perfowave
