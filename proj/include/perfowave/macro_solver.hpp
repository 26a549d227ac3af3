#pragma once

// Homogenized stochastic Sine-Gordon equation on the full box D:
//
//   V_tt + V_t - nu^{-1} div(A* grad V) + V - sin V = nu dW1/dt + g,
//   V = 0 on dD.
//
// Time stepping reuses the microscopic stepper with stiffness nu^{-1} K_A
// and no boundary degrees of freedom, so micro/macro differences come from
// the model and not from the scheme.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "perfowave/cell_homog.hpp"
#include "perfowave/geometry.hpp"
#include "perfowave/micro_solver.hpp"
#include "perfowave/noise.hpp"
#include "perfowave/wave_stepper.hpp"

namespace perfowave {

/// Fields in grid numbering; boundary nodes stay zero.
struct MacroState {
  double t = 0.0;
  Eigen::VectorXd V;
  Eigen::VectorXd Vt;
};

using Forcing = std::function<double(double, const Eigen::VectorXd&)>;

struct MacroProblem {
  std::shared_ptr<const PerforatedDomain> domain;  ///< hole-free grid on D
  std::shared_ptr<const WaveOperators> operators;
  EffectiveTensor tensor;
  double nu = 1.0;
  CovarianceSpec noise1;
  Eigen::MatrixXd basis_active;  ///< W1 basis at active nodes

  const StructuredGrid& grid() const { return domain->grid; }
};

/// Throws ValidationError unless the tensor is symmetric positive definite
/// and nu lies in (0, 1].
void validate_tensor(const EffectiveTensor& tensor, double nu);

MacroProblem make_macro_problem(const Box& domain, double h, const EffectiveTensor& tensor, double nu,
                                CovarianceSpec noise1);

enum class MacroScaling { PaperLiteral, DerivedConsistent };
std::string to_string(MacroScaling s);
MacroScaling macro_scaling_from_string(const std::string& s);

/// paper-literal: (u0/nu, v0/nu); derived-consistent: (nu u0, nu v0).
MacroState initialize_macro(const Eigen::VectorXd& u0, const Eigen::VectorXd& v0, double nu,
                            MacroScaling scaling);

MacroState zero_macro_state(const MacroProblem& problem);

class MacroIntegrator {
public:
  MacroIntegrator(const MacroProblem& problem, const MicroStepperConfig& config);

  /// One step; a null sampler means zero noise, an empty forcing means g = 0.
  MacroState step(const MacroState& state, WienerSampler* w1, const Forcing& forcing = {}) const;

  const MicroStepperConfig& config() const { return config_; }

private:
  const MacroProblem& problem_;
  MicroStepperConfig config_;
  WaveStepper stepper_;
  std::vector<Eigen::VectorXd> active_x_;
  mutable std::size_t steps_taken_ = 0;
};

/// Single step with a freshly assembled stepper (convenience, not for loops).
MacroState macro_step(const MacroState& state, const MacroProblem& problem,
                      const MicroStepperConfig& config, WienerSampler* w1, const Forcing& forcing = {});

/// States at every `record_stride` steps, endpoints included.
std::vector<MacroState> run_macro(const MacroProblem& problem, const MicroStepperConfig& config,
                                  const MacroState& initial, WienerSampler* w1, const Forcing& forcing = {});

/// ||V_t||^2 + nu^{-1} <A* grad V, grad V> + ||V||^2 + 4 ||cos(V/2)||^2.
double macro_energy(const MacroState& state, const MacroProblem& problem);

}  // namespace perfowave
