#include "perfowave/micro_solver.hpp"

#include <algorithm>
#include <cmath>

#include "perfowave/errors.hpp"

namespace perfowave {

std::size_t MicroStepperConfig::steps() const {
  if (!(dt > 0.0)) throw ConfigError("stepper.dt", "time step must be positive");
  if (!(T > 0.0)) throw ConfigError("stepper.T", "horizon must be positive");
  const double n = T / dt;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("stepper.T", "horizon is not an integer multiple of dt");
  }
  return static_cast<std::size_t>(r);
}

MicroProblem make_micro_problem(std::shared_ptr<const PerforatedDomain> domain,
                                CovarianceSpec noise1, CovarianceSpec noise2) {
  MicroProblem p;
  p.domain = std::move(domain);
  p.noise1 = std::move(noise1);
  p.noise2 = std::move(noise2);
  const auto& grid = p.domain->grid;
  const double eps = p.domain->spec.eps;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(grid.dim(), grid.dim());
  p.operators = std::make_shared<const WaveOperators>(
      make_wave_operators(grid, p.domain->boundary, identity, eps));

  const auto n_active = grid.active_count();
  const Eigen::MatrixXd basis1 = sine_basis_on_grid(grid, p.noise1.mode_count());
  p.basis_active.resize(n_active, basis1.cols());
  for (Eigen::Index i = 0; i < n_active; ++i) p.basis_active.row(i) = basis1.row(grid.fluid_nodes()[static_cast<std::size_t>(i)]);

  const auto& dofs = p.domain->boundary.dofs;
  if (p.noise2.mode_count() == p.noise1.mode_count()) {
    p.basis_dofs.resize(static_cast<Eigen::Index>(dofs.size()), basis1.cols());
    for (std::size_t k = 0; k < dofs.size(); ++k) p.basis_dofs.row(static_cast<Eigen::Index>(k)) = basis1.row(dofs[k].node);
  } else {
    const Eigen::MatrixXd basis2 = sine_basis_on_grid(grid, p.noise2.mode_count());
    p.basis_dofs.resize(static_cast<Eigen::Index>(dofs.size()), basis2.cols());
    for (std::size_t k = 0; k < dofs.size(); ++k) p.basis_dofs.row(static_cast<Eigen::Index>(k)) = basis2.row(dofs[k].node);
  }

  const Eigen::VectorXd a1 = p.noise1.alphas();
  const Eigen::VectorXd a2 = p.noise2.alphas();
  const Eigen::VectorXd& m = p.operators->mass;
  p.trace1_effective = (m.transpose() * p.basis_active.array().square().matrix()).dot(a1);
  if (!dofs.empty()) {
    p.trace2_effective =
        (p.operators->dof_weight.transpose() * p.basis_dofs.array().square().matrix()).dot(a2);
  }
  return p;
}

MicroState zero_micro_state(const MicroProblem& problem) {
  MicroState s;
  const auto nf = problem.grid().fluid_count();
  const auto nd = static_cast<Eigen::Index>(problem.boundary().size());
  s.u = Eigen::VectorXd::Zero(nf);
  s.v = Eigen::VectorXd::Zero(nf);
  s.delta = Eigen::VectorXd::Zero(nd);
  s.theta = Eigen::VectorXd::Zero(nd);
  return s;
}

MicroState make_micro_state(const MicroProblem& problem,
                            const std::function<double(const Eigen::VectorXd&)>& u0,
                            const std::function<double(const Eigen::VectorXd&)>& v0, double delta0,
                            double theta0) {
  MicroState s = zero_micro_state(problem);
  const auto& grid = problem.grid();
  for (Eigen::Index i = 0; i < grid.active_count(); ++i) {
    const auto x = grid.coordinates(grid.fluid_nodes()[static_cast<std::size_t>(i)]);
    if (u0) s.u[i] = u0(x);
    if (v0) s.v[i] = v0(x);
  }
  s.delta.setConstant(delta0);
  s.theta.setConstant(theta0);
  return s;
}

Eigen::VectorXd discrete_laplacian(const MicroState& state, const MicroProblem& problem) {
  const auto& op = *problem.operators;
  const auto na = op.active_size();
  Eigen::VectorXd lap = Eigen::VectorXd::Zero(state.u.size());
  Eigen::VectorXd flux = -(op.stiffness * state.u.head(na));
  if (op.dof_size() > 0) flux += op.lift(state.theta);
  lap.head(na) = flux.cwiseQuotient(op.mass);
  return lap;
}

MicroState apply_generator(const MicroState& state, const MicroProblem& problem) {
  const auto na = problem.grid().active_count();
  const double eps2 = problem.eps() * problem.eps();
  MicroState drift;
  drift.t = state.t;
  drift.u = state.v;
  drift.v = discrete_laplacian(state, problem);
  drift.v.head(na).array() += -state.u.head(na).array() - state.v.head(na).array() +
                              state.u.head(na).array().sin();
  drift.u.tail(drift.u.size() - na).setZero();
  drift.delta = state.theta;
  drift.theta = -state.theta / eps2 - state.delta;
  if (problem.operators->dof_size() > 0) drift.theta -= problem.operators->trace(state.v.head(na));
  return drift;
}

MicroIntegrator::MicroIntegrator(const MicroProblem& problem, const MicroStepperConfig& config)
    : problem_(problem),
      config_(config),
      stepper_(problem.operators, config.dt, config.flags, config.cg) {}

MicroState MicroIntegrator::step(const MicroState& state, WienerSampler* w1, WienerSampler* w2,
                                 NoiseIncrement* record) const {
  const auto na = problem_.grid().active_count();
  const double dt = config_.dt;
  MicroState next = state;

  Eigen::VectorXd dw1 = Eigen::VectorXd::Zero(na);
  if (w1) dw1.noalias() = problem_.basis_active * w1->next_coefficients(dt);
  Eigen::VectorXd dw2;
  if (w2 && problem_.operators->dof_size() > 0) {
    dw2.noalias() = problem_.basis_dofs * w2->next_coefficients(dt);
  } else if (w2) {
    w2->next_coefficients(dt);  // keep the stream in step
  }

  const auto report = stepper_.advance(next.u.head(na), next.v.head(na), next.delta, next.theta,
                                       dw1, dw2, Eigen::VectorXd());
  total_iterations_ += report.iterations;
  ++steps_taken_;
  next.t = state.t + dt;
  next.u.tail(next.u.size() - na).setZero();
  next.v.tail(next.v.size() - na).setZero();

  check_finite(next.u, steps_taken_, "u");
  check_finite(next.v, steps_taken_, "v");
  check_finite(next.delta, steps_taken_, "delta");
  check_finite(next.theta, steps_taken_, "theta");

  if (record) {
    record->dw1 = Eigen::VectorXd::Zero(state.u.size());
    record->dw1.head(na) = dw1;
    record->dw2 = dw2.size() > 0 ? dw2 : Eigen::VectorXd::Zero(next.delta.size());
  }
  return next;
}

Trajectory run_micro(const MicroProblem& problem, const MicroStepperConfig& config,
                     const MicroState& initial, WienerSampler* w1, WienerSampler* w2) {
  const std::size_t n_steps = config.steps();
  MicroIntegrator integrator(problem, config);
  Trajectory traj;
  traj.dt = config.dt;
  traj.stride = config.record_stride;
  traj.has_noise_log = config.record_noise && config.record_stride == 1;
  traj.states.push_back(initial);
  MicroState state = initial;
  for (std::size_t n = 1; n <= n_steps; ++n) {
    NoiseIncrement inc;
    state = integrator.step(state, w1, w2, traj.has_noise_log ? &inc : nullptr);
    if (traj.has_noise_log) traj.noise.push_back(std::move(inc));
    const bool keep = config.record_stride == 0 ? n == n_steps : n % config.record_stride == 0;
    if (keep) traj.states.push_back(state);
  }
  if (config.record_stride > 1 && n_steps % config.record_stride != 0) traj.states.push_back(state);
  return traj;
}

MicroState pseudo_transform(const MicroState& state, double r) {
  if (!(r >= 0.0 && r < 1.0)) throw ValidationError("pseudo_transform: r must lie in [0, 1)");
  MicroState out = state;
  out.v += r * state.u;
  out.theta += r * state.delta;
  return out;
}

MicroState inverse_pseudo_transform(const MicroState& pseudo, double r) {
  MicroState out = pseudo;
  out.v -= r * pseudo.u;
  out.theta -= r * pseudo.delta;
  return out;
}

MicroNorms micro_norms(const MicroState& s, const MicroProblem& problem) {
  const auto& op = *problem.operators;
  const auto& m = problem.grid().fluid_mass();
  const auto na = op.active_size();
  MicroNorms n{};
  const auto ua = s.u.head(na);
  n.v2 = (m.array() * s.v.array().square()).sum();
  n.grad_u2 = ua.dot(op.stiffness * ua);
  n.u2 = (m.array() * s.u.array().square()).sum();
  n.cos_half_u2 = (m.array() * (0.5 * s.u.array()).cos().square()).sum();
  n.u_sin_u = (m.array() * s.u.array() * s.u.array().sin()).sum();
  if (op.dof_size() > 0) {
    const Eigen::VectorXd u_tr = op.trace(ua);
    const auto& w = op.dof_weight;
    n.theta2 = (w.array() * s.theta.array().square()).sum();
    n.delta2 = (w.array() * s.delta.array().square()).sum();
    n.u_delta = (w.array() * u_tr.array() * s.delta.array()).sum();
    n.u_theta = (w.array() * u_tr.array() * s.theta.array()).sum();
  }
  return n;
}

double pseudo_energy(const MicroState& pseudo, double r, double eps, const MicroProblem& problem) {
  const auto n = micro_norms(pseudo, problem);
  const double eps2 = eps * eps;
  return n.v2 + n.grad_u2 + (1.0 - r + r * r) * n.u2 + n.theta2 +
         (1.0 - r / eps2 + r * r) * n.delta2 + 4.0 * n.cos_half_u2 + 2.0 * r * n.u_delta;
}

double squared_state_norm(const MicroState& state, const MicroProblem& problem) {
  const auto n = micro_norms(state, problem);
  return n.u2 + n.grad_u2 + n.v2 + n.delta2 + n.theta2;
}

namespace {

// Integrand of the dissipation and cross terms of the pseudo-energy balance,
// with the sign it carries on the right-hand side.
double balance_rate(const MicroNorms& n, double r, double eps) {
  const double eps2 = eps * eps;
  const double a = 1.0 - r + r * r;
  const double b = 1.0 - r / eps2 + r * r;
  const double dissipation = 2.0 * (1.0 - r) * n.v2 + 2.0 * r * n.grad_u2 + 2.0 * r * a * n.u2 +
                             2.0 * (1.0 / eps2 - r) * n.theta2 + 2.0 * b * r * n.delta2;
  return -dissipation + 2.0 * r * n.u_sin_u + 4.0 * r * n.u_theta - 4.0 * r * r * n.u_delta;
}

}  // namespace

EnergyIdentityReport energy_identity_residual(const Trajectory& traj, double r, double eps,
                                              const MicroProblem& problem) {
  if (!traj.has_noise_log || traj.stride != 1 || traj.noise.size() + 1 != traj.states.size()) {
    throw ValidationError("energy_identity_residual: trajectory lacks a per-step noise log");
  }
  const auto& op = *problem.operators;
  const auto& m = problem.grid().fluid_mass();
  const double dt = traj.dt;
  const double tr = problem.trace1_effective + problem.trace2_effective;

  EnergyIdentityReport rep;
  std::vector<MicroState> pseudo;
  pseudo.reserve(traj.states.size());
  for (const auto& s : traj.states) pseudo.push_back(pseudo_transform(s, r));

  const double e0 = pseudo_energy(pseudo.front(), r, eps, problem);
  double integral = 0.0;
  double stochastic = 0.0;
  double rate_prev = balance_rate(micro_norms(pseudo.front(), problem), r, eps);
  for (std::size_t n = 0; n < pseudo.size(); ++n) {
    const auto& ps = pseudo[n];
    const double t = n * dt;
    if (n > 0) {
      const double rate = balance_rate(micro_norms(ps, problem), r, eps);
      integral += 0.5 * dt * (rate_prev + rate);
      rate_prev = rate;
      const auto& prev = pseudo[n - 1];
      const auto& inc = traj.noise[n - 1];
      stochastic += 2.0 * (m.array() * prev.v.array() * inc.dw1.array()).sum();
      if (op.dof_size() > 0) {
        stochastic += 2.0 * (op.dof_weight.array() * prev.theta.array() * inc.dw2.array()).sum();
      }
    }
    const double e = pseudo_energy(ps, r, eps, problem);
    rep.times.push_back(t);
    rep.energy.push_back(e);
    rep.expected_residual.push_back((e - e0) - (integral + t * tr));
    rep.pathwise_residual.push_back((e - e0) - (integral + stochastic + t * tr));
  }
  return rep;
}

double weak_residual(const Trajectory& traj, const TestFunction& phi, const MicroProblem& problem) {
  if (traj.stride != 1) throw ValidationError("weak_residual: needs every time step");
  const auto& grid = problem.grid();
  const auto& op = *problem.operators;
  const auto& m = grid.fluid_mass();
  const auto na = op.active_size();
  const auto nf = grid.fluid_count();
  const double eps2 = problem.eps() * problem.eps();
  const double dt = traj.dt;
  const std::size_t n_states = traj.states.size();
  const double T = (n_states - 1) * dt;

  // Nodes on which the test function must vanish.
  std::vector<Eigen::VectorXd> forbidden;
  for (std::int64_t id = 0; id < grid.node_count(); ++id) {
    if (grid.node_class(id) != NodeClass::FluidInterior) forbidden.push_back(grid.coordinates(id));
  }
  std::vector<Eigen::VectorXd> fluid_x(static_cast<std::size_t>(nf));
  for (Eigen::Index i = 0; i < nf; ++i) fluid_x[static_cast<std::size_t>(i)] = grid.coordinates(grid.fluid_nodes()[static_cast<std::size_t>(i)]);

  double scale = 0.0;
  for (std::size_t n = 0; n < n_states; ++n) {
    for (const auto& x : fluid_x) scale = std::max(scale, std::abs(phi.value(n * dt, x)));
  }
  const double tol = 1e-12 * std::max(scale, 1e-300);
  for (std::size_t n = 0; n < n_states; ++n) {
    for (const auto& x : forbidden) {
      if (std::abs(phi.value(n * dt, x)) > tol) {
        throw ValidationError("weak_residual: test function support meets a hole or the outer boundary");
      }
    }
  }
  for (const auto& x : fluid_x) {
    if (std::abs(phi.value(0.0, x)) > tol || std::abs(phi.value(T, x)) > tol) {
      throw ValidationError("weak_residual: test function must vanish at t = 0 and t = T");
    }
  }

  std::vector<Eigen::Index> dof_fluid;
  for (const auto& dof : problem.boundary().dofs) dof_fluid.push_back(dof.fluid);
  const Eigen::VectorXd& w = op.dof_weight;

  double lhs = 0.0;
  double rhs = 0.0;
  Eigen::VectorXd f(nf), ft(nf), ftt(nf);
  for (std::size_t n = 0; n < n_states; ++n) {
    const double t = n * dt;
    for (Eigen::Index i = 0; i < nf; ++i) {
      const auto& x = fluid_x[static_cast<std::size_t>(i)];
      f[i] = phi.value(t, x);
      ft[i] = phi.dt(t, x);
      ftt[i] = phi.dtt(t, x);
    }
    const auto& s = traj.states[n];
    const double weight = (n == 0 || n + 1 == n_states) ? 0.5 * dt : dt;
    double vol = (m.array() * s.u.array() * (ftt - ft + f).array()).sum();
    vol += s.u.head(na).dot(op.stiffness * f.head(na));
    vol -= (m.array() * s.u.array().sin() * f.array()).sum();
    double surf = 0.0, surf_rhs = 0.0;
    for (std::size_t k = 0; k < dof_fluid.size(); ++k) {
      const auto i = dof_fluid[k];
      const auto kk = static_cast<Eigen::Index>(k);
      surf += w[kk] * s.delta[kk] * (ftt[i] + f[i]);
      surf_rhs += w[kk] * s.u[i] * ft[i];
    }
    lhs += weight * (vol + eps2 * surf);
    rhs += weight * eps2 * surf_rhs;

    if (n + 1 < n_states && traj.has_noise_log) {
      const auto& inc = traj.noise[n];
      rhs += (m.array() * f.array() * inc.dw1.array()).sum();
      for (std::size_t k = 0; k < dof_fluid.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        rhs += eps2 * w[kk] * f[dof_fluid[k]] * inc.dw2[kk];
      }
    }
  }
  return lhs - rhs;
}

std::vector<double> moment_monitor(std::span<const Trajectory> ensemble, double r,
                                   const MicroProblem& problem) {
  if (ensemble.size() < 2) throw ValidationError("moment_monitor: at least two paths required");
  const std::size_t n_times = ensemble.front().states.size();
  std::vector<double> mean(n_times, 0.0);
  for (const auto& traj : ensemble) {
    if (traj.states.size() != n_times) throw ValidationError("moment_monitor: ragged ensemble");
    for (std::size_t n = 0; n < n_times; ++n) {
      mean[n] += squared_state_norm(pseudo_transform(traj.states[n], r), problem);
    }
  }
  for (auto& x : mean) x /= static_cast<double>(ensemble.size());
  return mean;
}

SmallnessReport check_smallness(const PseudoParams& params, const MicroProblem& problem) {
  SmallnessReport rep;
  const auto& grid = problem.grid();
  const auto na = grid.active_count();
  const int n_fields = 20;
  const int n_modes = 8;
  const Eigen::MatrixXd basis = sine_basis_on_grid(grid, n_modes);
  double c2 = 0.0;
  if (!problem.boundary().empty()) {
    for (int f = 0; f < n_fields; ++f) {
      Eigen::VectorXd xi(n_modes);
      for (int m = 0; m < n_modes; ++m) {
        xi[m] = counter_normal(0x5eedC0FFEEull, {static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(m), 0u, 7u});
      }
      const Eigen::VectorXd field = basis * xi;
      MicroState s = zero_micro_state(problem);
      s.u = restrict_to_fluid(field, grid);
      s.u.tail(s.u.size() - na).setZero();
      const auto n = micro_norms(s, problem);
      const Eigen::VectorXd tr = restrict_to_boundary(field, problem.boundary());
      const double boundary2 = (problem.operators->dof_weight.array() * tr.array().square()).sum();
      const double h1 = n.u2 + n.grad_u2;
      if (h1 > 0.0) c2 = std::max(c2, boundary2 / h1);
    }
  }
  rep.trace_constant_sq = c2;
  const double r = params.r;
  const double eps2 = params.eps * params.eps;
  rep.terms = {1.0 - 2.0 * r, 1.0 - 3.0 * r * c2, 1.0 - r - r / eps2 + r * r,
               1.0 - 2.0 * r - 6.0 * r * c2 + 2.0 * r * r, 1.0 - r - r * c2 + r * r};
  rep.satisfied = std::all_of(rep.terms.begin(), rep.terms.end(), [](double x) { return x > 0.0; });
  return rep;
}

}  // namespace perfowave
