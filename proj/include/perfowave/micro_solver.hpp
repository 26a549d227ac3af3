#pragma once

// Microscopic stochastic Sine-Gordon system on the perforated domain with a
// dynamical boundary condition on the hole surfaces:
//
//   du = v dt,   dv = (Lap u - u - v + sin u) dt + dW1        in D^eps
//   d delta = theta dt,   d theta = (-theta/eps^2 - delta - v) dt + dW2   on dS^eps
//   u = v = 0 on dD,   du/dn = theta on dS^eps
//
// plus the pseudo-energy functional E_r and its Ito balance, used as a
// consistency oracle for the time stepper.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "perfowave/geometry.hpp"
#include "perfowave/noise.hpp"
#include "perfowave/wave_stepper.hpp"

namespace perfowave {

/// Solution U = (u, v, delta, theta).  u and v use the fluid numbering of
/// the grid (outer-boundary entries stay exactly zero); delta and theta
/// are indexed by boundary dof.
struct MicroState {
  double t = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  Eigen::VectorXd delta;
  Eigen::VectorXd theta;
};

struct MicroStepperConfig {
  double dt = 1.0 / 64.0;
  double T = 1.0;
  StepperFlags flags;
  CgOptions cg;
  std::size_t record_stride = 1;  ///< keep every n-th state (0 = endpoints only)
  bool record_noise = true;

  /// Number of steps N with T = N dt; throws ConfigError otherwise.
  std::size_t steps() const;
};

struct PseudoParams {
  double r = 0.0;
  double eps = 0.25;
};

/// Everything a path worker needs, shared read-only between workers.
struct MicroProblem {
  std::shared_ptr<const PerforatedDomain> domain;
  std::shared_ptr<const WaveOperators> operators;
  CovarianceSpec noise1;
  CovarianceSpec noise2;
  Eigen::MatrixXd basis_active;  ///< W1 basis at active nodes
  Eigen::MatrixXd basis_dofs;    ///< W2 basis at boundary dof nodes
  double trace1_effective = 0.0;  ///< E||dW1||^2 / dt in the discrete L2(D^eps) norm
  double trace2_effective = 0.0;  ///< E||dW2||^2 / dt in the discrete L2(dS^eps) norm

  double eps() const { return domain->spec.eps; }
  const StructuredGrid& grid() const { return domain->grid; }
  const BoundaryDofMap& boundary() const { return domain->boundary; }
};

MicroProblem make_micro_problem(std::shared_ptr<const PerforatedDomain> domain,
                                CovarianceSpec noise1, CovarianceSpec noise2);

MicroState zero_micro_state(const MicroProblem& problem);

/// State from nodal functions of x and constant boundary values.
MicroState make_micro_state(const MicroProblem& problem,
                            const std::function<double(const Eigen::VectorXd&)>& u0,
                            const std::function<double(const Eigen::VectorXd&)>& v0,
                            double delta0, double theta0);

/// Drift (v, Lap u - u - v + sin u, theta, -theta/eps^2 - delta - v).
MicroState apply_generator(const MicroState& state, const MicroProblem& problem);

/// Discrete Laplacian with the flux closure du/dn = theta at hole faces
/// (fluid numbering, zero at outer-boundary nodes).
Eigen::VectorXd discrete_laplacian(const MicroState& state, const MicroProblem& problem);

/// Per-step noise increments, fluid numbering for dW1 and dof order for dW2.
struct NoiseIncrement {
  Eigen::VectorXd dw1;
  Eigen::VectorXd dw2;
};

class MicroIntegrator {
public:
  MicroIntegrator(const MicroProblem& problem, const MicroStepperConfig& config);

  const MicroStepperConfig& config() const { return config_; }
  const MicroProblem& problem() const { return problem_; }

  /// One semi-implicit Euler-Maruyama step.  Null samplers mean zero noise.
  /// `record`, when given, receives the increments used.
  MicroState step(const MicroState& state, WienerSampler* w1, WienerSampler* w2,
                  NoiseIncrement* record = nullptr) const;

  std::size_t steps_taken() const { return steps_taken_; }
  std::size_t total_iterations() const { return total_iterations_; }

private:
  const MicroProblem& problem_;
  MicroStepperConfig config_;
  WaveStepper stepper_;
  mutable std::size_t steps_taken_ = 0;
  mutable std::size_t total_iterations_ = 0;
};

struct Trajectory {
  double dt = 0.0;
  std::size_t stride = 1;
  std::vector<MicroState> states;
  std::vector<NoiseIncrement> noise;  ///< noise[n] drives states n -> n+1 (stride 1 only)
  bool has_noise_log = false;
};

/// Runs [0, T] from `initial`; samplers may be null for a noise-free run.
Trajectory run_micro(const MicroProblem& problem, const MicroStepperConfig& config,
                     const MicroState& initial, WienerSampler* w1, WienerSampler* w2);

/// (u, v + r u, delta, theta + r delta).
MicroState pseudo_transform(const MicroState& state, double r);
MicroState inverse_pseudo_transform(const MicroState& pseudo, double r);

/// Pseudo energy E_r of a pseudo-state (all seven terms).
double pseudo_energy(const MicroState& pseudo, double r, double eps, const MicroProblem& problem);

/// Squared H_eps norm ||u||^2_{H^1} + ||v||^2 + ||delta||^2 + ||theta||^2.
double squared_state_norm(const MicroState& state, const MicroProblem& problem);

/// Discrete norms used by the energy functionals.
struct MicroNorms {
  double v2;            ///< ||v||^2 over D^eps
  double grad_u2;       ///< ||grad u||^2
  double u2;            ///< ||u||^2
  double cos_half_u2;   ///< ||cos(u/2)||^2
  double u_sin_u;       ///< <u, sin u>
  double theta2;        ///< ||theta||^2 on dS^eps
  double delta2;
  double u_delta;       ///< <u, delta> on dS^eps
  double u_theta;
};
MicroNorms micro_norms(const MicroState& state, const MicroProblem& problem);

struct EnergyIdentityReport {
  std::vector<double> times;
  std::vector<double> energy;             ///< E_r(t)
  std::vector<double> pathwise_residual;  ///< full Ito identity, left minus right
  std::vector<double> expected_residual;  ///< identity without the stochastic integrals
};

/// Evaluates the pathwise Ito energy balance along a stride-1 trajectory.
/// Time integrals use the trapezoidal rule, stochastic integrals the
/// left-point rule.  Throws ValidationError without a noise log.
EnergyIdentityReport energy_identity_residual(const Trajectory& trajectory, double r, double eps,
                                              const MicroProblem& problem);

/// Smooth test function given analytically together with its time derivatives.
struct TestFunction {
  std::function<double(double, const Eigen::VectorXd&)> value;
  std::function<double(double, const Eigen::VectorXd&)> dt;
  std::function<double(double, const Eigen::VectorXd&)> dtt;
};

/// Signed sum of the eight space-time integrals of the variational form
/// (time derivatives moved onto the test function).  Throws ValidationError
/// when the test function does not vanish on holes, dD or at t = 0, T.
double weak_residual(const Trajectory& trajectory, const TestFunction& phi, const MicroProblem& problem);

/// Sample mean over paths of ||U_r(t)||^2 at each recorded time.
std::vector<double> moment_monitor(std::span<const Trajectory> ensemble, double r,
                                   const MicroProblem& problem);

/// Smallness condition terms for the pseudo-energy parameter r with an
/// estimated discrete trace constant.
struct SmallnessReport {
  double trace_constant_sq = 0.0;
  std::array<double, 5> terms{};
  bool satisfied = false;
};
SmallnessReport check_smallness(const PseudoParams& params, const MicroProblem& problem);

}  // namespace perfowave
