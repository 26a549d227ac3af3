#include "perfowave/macro_solver.hpp"

#include <cmath>

#include "perfowave/errors.hpp"

namespace perfowave {

void validate_tensor(const EffectiveTensor& tensor, double nu) {
  const auto& a = tensor.matrix;
  if (a.rows() != a.cols() || a.rows() < 2 || a.rows() > 3) throw ValidationError("tensor must be 2x2 or 3x3");
  if (!a.allFinite()) throw ValidationError("tensor has non-finite entries");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw ValidationError("tensor is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0) throw ValidationError("tensor is not positive definite");
  if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("porosity must lie in (0, 1]");
}

MacroProblem make_macro_problem(const Box& domain, double h, const EffectiveTensor& tensor, double nu,
                                CovarianceSpec noise1) {
  validate_tensor(tensor, nu);
  MacroProblem p;
  p.domain = std::make_shared<const PerforatedDomain>(build_box_domain(domain, h));
  p.tensor = tensor;
  p.nu = nu;
  p.noise1 = std::move(noise1);
  const auto& grid = p.domain->grid;
  const Eigen::MatrixXd scaled = tensor.matrix / nu;
  p.operators = std::make_shared<const WaveOperators>(
      make_wave_operators(grid, p.domain->boundary, scaled, 1.0));
  const Eigen::MatrixXd basis = sine_basis_on_grid(grid, p.noise1.mode_count());
  p.basis_active.resize(grid.active_count(), basis.cols());
  for (Eigen::Index i = 0; i < grid.active_count(); ++i) {
    p.basis_active.row(i) = basis.row(grid.fluid_nodes()[static_cast<std::size_t>(i)]);
  }
  return p;
}

std::string to_string(MacroScaling s) {
  return s == MacroScaling::PaperLiteral ? "paper-literal" : "derived-consistent";
}

MacroScaling macro_scaling_from_string(const std::string& s) {
  if (s == "paper-literal") return MacroScaling::PaperLiteral;
  if (s == "derived-consistent") return MacroScaling::DerivedConsistent;
  throw ConfigError("macro.scaling", "expected paper-literal or derived-consistent, got '" + s + "'");
}

MacroState initialize_macro(const Eigen::VectorXd& u0, const Eigen::VectorXd& v0, double nu,
                            MacroScaling scaling) {
  if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("porosity must lie in (0, 1]");
  if (u0.size() != v0.size()) throw ValidationError("initialize_macro: shape mismatch");
  MacroState s;
  if (scaling == MacroScaling::PaperLiteral) {
    s.V = u0 / nu;
    s.Vt = v0 / nu;
  } else {
    s.V = nu * u0;
    s.Vt = nu * v0;
  }
  return s;
}

MacroState zero_macro_state(const MacroProblem& problem) {
  MacroState s;
  s.V = Eigen::VectorXd::Zero(problem.grid().node_count());
  s.Vt = s.V;
  return s;
}

MacroIntegrator::MacroIntegrator(const MacroProblem& problem, const MicroStepperConfig& config)
    : problem_(problem),
      config_(config),
      stepper_(problem.operators, config.dt, config.flags, config.cg) {
  const auto& grid = problem.grid();
  active_x_.reserve(static_cast<std::size_t>(grid.active_count()));
  for (Eigen::Index i = 0; i < grid.active_count(); ++i) {
    active_x_.push_back(grid.coordinates(grid.fluid_nodes()[static_cast<std::size_t>(i)]));
  }
}

MacroState MacroIntegrator::step(const MacroState& state, WienerSampler* w1, const Forcing& forcing) const {
  const auto& grid = problem_.grid();
  const auto na = grid.active_count();
  const auto& nodes = grid.fluid_nodes();
  const double dt = config_.dt;

  Eigen::VectorXd u(na), v(na);
  for (Eigen::Index i = 0; i < na; ++i) {
    u[i] = state.V[nodes[static_cast<std::size_t>(i)]];
    v[i] = state.Vt[nodes[static_cast<std::size_t>(i)]];
  }
  Eigen::VectorXd dw1 = Eigen::VectorXd::Zero(na);
  if (w1) dw1.noalias() = problem_.basis_active * w1->next_coefficients(dt);
  if (problem_.nu != 1.0) dw1 *= problem_.nu;

  Eigen::VectorXd g;
  if (forcing) {
    g.resize(na);
    for (Eigen::Index i = 0; i < na; ++i) g[i] = forcing(state.t + dt, active_x_[static_cast<std::size_t>(i)]);
  }
  Eigen::VectorXd delta, theta;
  stepper_.advance(u, v, delta, theta, dw1, Eigen::VectorXd(), g);
  ++steps_taken_;

  MacroState next;
  next.t = state.t + dt;
  next.V = Eigen::VectorXd::Zero(state.V.size());
  next.Vt = Eigen::VectorXd::Zero(state.V.size());
  for (Eigen::Index i = 0; i < na; ++i) {
    next.V[nodes[static_cast<std::size_t>(i)]] = u[i];
    next.Vt[nodes[static_cast<std::size_t>(i)]] = v[i];
  }
  check_finite(next.V, steps_taken_, "V");
  check_finite(next.Vt, steps_taken_, "V_t");
  return next;
}

MacroState macro_step(const MacroState& state, const MacroProblem& problem, const MicroStepperConfig& config,
                      WienerSampler* w1, const Forcing& forcing) {
  return MacroIntegrator(problem, config).step(state, w1, forcing);
}

std::vector<MacroState> run_macro(const MacroProblem& problem, const MicroStepperConfig& config,
                                  const MacroState& initial, WienerSampler* w1, const Forcing& forcing) {
  const std::size_t n_steps = config.steps();
  MacroIntegrator integrator(problem, config);
  std::vector<MacroState> out{initial};
  MacroState state = initial;
  for (std::size_t n = 1; n <= n_steps; ++n) {
    state = integrator.step(state, w1, forcing);
    const bool keep = config.record_stride == 0 ? n == n_steps : n % config.record_stride == 0;
    if (keep) out.push_back(state);
  }
  if (out.back().t != state.t) out.push_back(state);
  return out;
}

double macro_energy(const MacroState& state, const MacroProblem& problem) {
  const auto& grid = problem.grid();
  const auto& op = *problem.operators;
  const auto na = grid.active_count();
  Eigen::VectorXd u(na), v(na);
  for (Eigen::Index i = 0; i < na; ++i) {
    u[i] = state.V[grid.fluid_nodes()[static_cast<std::size_t>(i)]];
    v[i] = state.Vt[grid.fluid_nodes()[static_cast<std::size_t>(i)]];
  }
  const auto& m = op.mass;
  return (m.array() * v.array().square()).sum() + u.dot(op.stiffness * u) +
         (m.array() * u.array().square()).sum() + 4.0 * (m.array() * (0.5 * u.array()).cos().square()).sum();
}

}  // namespace perfowave
