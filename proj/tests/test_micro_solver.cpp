#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "perfowave/dispatch.hpp"
#include "perfowave/errors.hpp"
#include "perfowave/micro_solver.hpp"

namespace perfowave {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::shared_ptr<const PerforatedDomain> perforated(double eps = 0.25, double h = 1.0 / 32) {
  return std::make_shared<const PerforatedDomain>(build_perforated_domain(
      make_box({0, 0}, {1, 1}), eps, UnitCellSpec::unit_square(make_box({0.25, 0.25}, {0.75, 0.75})), h));
}

std::shared_ptr<const PerforatedDomain> hole_free(double h) {
  return std::make_shared<const PerforatedDomain>(build_box_domain(make_box({0, 0}, {1, 1}), h));
}

MicroStepperConfig stepper(double dt, double T, std::size_t stride = 1) {
  MicroStepperConfig c;
  c.dt = dt;
  c.T = T;
  c.record_stride = stride;
  c.record_noise = stride == 1;
  return c;
}

MicroState smooth_state(const MicroProblem& p) {
  auto s = make_micro_state(
      p, [](const Eigen::VectorXd& x) { return 0.3 * std::sin(kPi * x[0]) * std::sin(kPi * x[1]); },
      [](const Eigen::VectorXd& x) { return 0.2 * std::sin(2 * kPi * x[0]) * std::sin(kPi * x[1]); }, 0.05, -0.1);
  return s;
}

TEST(MicroGenerator, ZeroStateHasZeroDrift) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto d = apply_generator(zero_micro_state(p), p);
  EXPECT_TRUE(d.u.isZero(0.0) && d.v.isZero(0.0) && d.delta.isZero(0.0) && d.theta.isZero(0.0));
}

TEST(MicroGenerator, ConstantHalfPiInInterior) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  MicroState s = zero_micro_state(p);
  s.u.head(p.grid().active_count()).setConstant(kPi / 2);
  const auto d = apply_generator(s, p);
  const auto& g = p.grid();
  const double h = g.spacing();
  int checked = 0;
  for (std::int64_t i = 0; i < g.active_count(); ++i) {
    const auto node = g.fluid_nodes()[static_cast<std::size_t>(i)];
    const Eigen::VectorXd x = g.coordinates(node);
    // away from the outer boundary and the holes, every neighbour carries the same value
    bool far = x.minCoeff() > 1.5 * h && x.maxCoeff() < 1 - 1.5 * h;
    for (int a = 0; a < 2 && far; ++a)
      for (int s2 : {-1, 1}) {
        Eigen::VectorXd y = x;
        y[a] += s2 * h;
        for (const auto& hole : p.domain->spec.holes)
          if ((y.array() >= hole.lower.array() - 1e-12).all() && (y.array() <= hole.upper.array() + 1e-12).all())
            far = false;
      }
    if (!far) continue;
    EXPECT_NEAR(d.v[i], -kPi / 2 + 1, 1e-12);
    EXPECT_EQ(d.u[i], 0.0);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(MicroGenerator, LaplacianSecondOrderOnHoleFreeGrid) {
  std::vector<double> errs;
  for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const auto p = make_micro_problem(hole_free(h), CovarianceSpec::zero(), CovarianceSpec::zero());
    const auto f = [](const Eigen::VectorXd& x) { return std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
    auto s = make_micro_state(p, f, [](const Eigen::VectorXd&) { return 0.0; }, 0, 0);
    const Eigen::VectorXd lap = discrete_laplacian(s, p);
    const auto na = p.grid().active_count();
    errs.push_back((lap.head(na) + 2 * kPi * kPi * s.u.head(na)).cwiseAbs().maxCoeff());
  }
  EXPECT_NEAR(std::log2(errs[0] / errs[1]), 2.0, 0.1);
  EXPECT_NEAR(std::log2(errs[1] / errs[2]), 2.0, 0.1);
}

TEST(MicroStep, ZeroStateIsFixedPoint) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto traj = run_micro(p, stepper(1.0 / 32, 0.5), zero_micro_state(p), nullptr, nullptr);
  for (const auto& s : traj.states) {
    EXPECT_TRUE(s.u.isZero(0.0) && s.v.isZero(0.0) && s.delta.isZero(0.0) && s.theta.isZero(0.0));
  }
}

TEST(MicroStep, OuterBoundaryStaysZero) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec{}, CovarianceSpec{});
  WienerSampler w1(p.noise1, 3, {0, 1}), w2(p.noise2, 3, {0, 2});
  const auto traj = run_micro(p, stepper(1.0 / 32, 0.25, 0), smooth_state(p), &w1, &w2);
  const auto na = p.grid().active_count();
  const auto& end = traj.states.back();
  EXPECT_TRUE(end.u.tail(end.u.size() - na).isZero(0.0));
  EXPECT_TRUE(end.v.tail(end.v.size() - na).isZero(0.0));
}

TEST(MicroStep, SignFlipSymmetry) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const MicroIntegrator integrator(p, stepper(1.0 / 32, 1.0));
  const auto s = smooth_state(p);
  MicroState m = s;
  m.u = -s.u;
  m.v = -s.v;
  m.delta = -s.delta;
  m.theta = -s.theta;
  const auto a = integrator.step(s, nullptr, nullptr);
  const auto b = integrator.step(m, nullptr, nullptr);
  const double scale = a.v.cwiseAbs().maxCoeff();
  EXPECT_LE((a.u + b.u).cwiseAbs().maxCoeff(), 1e-9 * scale);
  EXPECT_LE((a.v + b.v).cwiseAbs().maxCoeff(), 1e-9 * scale);
  EXPECT_LE((a.theta + b.theta).cwiseAbs().maxCoeff(), 1e-9 * scale);
}

TEST(MicroStep, BitReproducible) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec{}, CovarianceSpec{});
  auto run = [&] {
    WienerSampler w1(p.noise1, 42, {5, 1}), w2(p.noise2, 42, {5, 2});
    return run_micro(p, stepper(1.0 / 32, 0.25, 0), smooth_state(p), &w1, &w2).states.back();
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.theta, b.theta);
}

TEST(MicroStep, LinearRegimeEnergyDecays) {
  const auto dom = perforated();
  const auto p = make_micro_problem(dom, CovarianceSpec::zero(), CovarianceSpec::zero());
  MicroState s = zero_micro_state(p);
  s.u = restrict_to_fluid(first_mode_field(dom->grid, 1e-6), dom->grid);
  const auto traj = run_micro(p, stepper(1.0 / 64, 1.0), s, nullptr, nullptr);
  double prev = INFINITY;
  for (const auto& st : traj.states) {
    const auto n = micro_norms(st, p);
    const double e = n.v2 + n.grad_u2;
    EXPECT_LE(e, prev * (1 + 1e-9));
    prev = e;
  }
}

TEST(MicroStep, NonFiniteStateRaisesBlowUp) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  MicroState s = zero_micro_state(p);
  s.v[0] = NAN;
  EXPECT_THROW(run_micro(p, stepper(1.0 / 32, 0.125), s, nullptr, nullptr), BlowUpError);
}

TEST(PseudoTransform, Examples) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto s = smooth_state(p);
  const auto same = pseudo_transform(s, 0.0);
  EXPECT_EQ(same.v, s.v);
  EXPECT_EQ(same.theta, s.theta);

  MicroState c = zero_micro_state(p);
  c.u.setConstant(1.0);
  c.v.setConstant(2.0);
  EXPECT_TRUE(pseudo_transform(c, 0.5).v.isApprox(Eigen::VectorXd::Constant(c.v.size(), 2.5)));

  const auto back = inverse_pseudo_transform(pseudo_transform(s, 0.25), 0.25);
  EXPECT_EQ(back.u, s.u);
  EXPECT_EQ(back.delta, s.delta);
  // v + r u - r u can differ from v in the last bit
  EXPECT_LE((back.v - s.v).cwiseAbs().maxCoeff(), 1e-16);
  EXPECT_LE((back.theta - s.theta).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(PseudoEnergy, ZeroStateAndRZero) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const double fluid_area = p.grid().fluid_mass().sum();
  EXPECT_NEAR(fluid_area, 0.75, 1e-12);
  for (double r : {0.0, 0.01, 0.03})
    EXPECT_NEAR(pseudo_energy(pseudo_transform(zero_micro_state(p), r), r, 0.25, p), 4 * fluid_area, 1e-12);

  const auto s = smooth_state(p);
  const auto n = micro_norms(s, p);
  EXPECT_NEAR(pseudo_energy(s, 0.0, 0.25, p),
              n.v2 + n.grad_u2 + n.u2 + n.theta2 + n.delta2 + 4 * n.cos_half_u2, 1e-12);
}

TEST(EnergyIdentity, ZeroStateZeroNoise) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto traj = run_micro(p, stepper(1.0 / 32, 0.5), zero_micro_state(p), nullptr, nullptr);
  const auto rep = energy_identity_residual(traj, 0.0, 0.25, p);
  for (double r : rep.pathwise_residual) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(EnergyIdentity, DeterministicResidualShrinksWithDt) {
  const auto dom = perforated();
  const auto p = make_micro_problem(dom, CovarianceSpec::zero(), CovarianceSpec::zero());
  // u0 = 0 keeps the initial data compatible with the hole-face flux condition
  MicroState s = zero_micro_state(p);
  s.v = restrict_to_fluid(first_mode_field(dom->grid, 0.5), dom->grid);
  s.delta.setConstant(0.1);
  std::vector<double> res;
  for (double dt : {1.0 / 32, 1.0 / 64, 1.0 / 128}) {
    const auto traj = run_micro(p, stepper(dt, 0.5), s, nullptr, nullptr);
    res.push_back(std::abs(energy_identity_residual(traj, 0.0, 0.25, p).pathwise_residual.back()));
  }
  EXPECT_LT(res[1], 0.75 * res[0]);
  EXPECT_LT(res[2], 0.75 * res[1]);
}

TEST(EnergyIdentity, NeedsNoiseLog) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto traj = run_micro(p, stepper(1.0 / 32, 0.25, 2), zero_micro_state(p), nullptr, nullptr);
  EXPECT_THROW(energy_identity_residual(traj, 0.0, 0.25, p), ValidationError);
}

TEST(WeakResidual, ZeroCases) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto traj = run_micro(p, stepper(1.0 / 32, 1.0), zero_micro_state(p), nullptr, nullptr);
  // supported in the fluid corridor 0.1875 < x < 0.3125 between two hole columns
  TestFunction phi;
  auto bump = [](double t, const Eigen::VectorXd& x) {
    const bool in = x[0] > 0.1875 && x[0] < 0.3125;
    const double s0 = std::sin(8 * kPi * (x[0] - 0.1875)), s1 = std::sin(kPi * x[1]);
    return in ? std::pow(std::sin(kPi * t), 2) * s0 * s0 * s1 * s1 : 0.0;
  };
  phi.value = bump;
  phi.dt = [](double, const Eigen::VectorXd&) { return 0.0; };
  phi.dtt = [](double, const Eigen::VectorXd&) { return 0.0; };
  EXPECT_EQ(weak_residual(traj, phi, p), 0.0);
  TestFunction zero{[](double, const Eigen::VectorXd&) { return 0.0; },
                    [](double, const Eigen::VectorXd&) { return 0.0; },
                    [](double, const Eigen::VectorXd&) { return 0.0; }};
  const auto moving = run_micro(p, stepper(1.0 / 32, 1.0), smooth_state(p), nullptr, nullptr);
  EXPECT_EQ(weak_residual(moving, zero, p), 0.0);
}

TEST(MomentMonitor, ZeroNoiseZeroDataIsZero) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  std::vector<Trajectory> ens(2, run_micro(p, stepper(1.0 / 16, 1.0, 4), zero_micro_state(p), nullptr, nullptr));
  for (double m : moment_monitor(ens, 0.01, p)) EXPECT_EQ(m, 0.0);
}

TEST(MomentMonitor, NoiseFreeDecayAfterTransient) {
  const auto p = make_micro_problem(perforated(), CovarianceSpec::zero(), CovarianceSpec::zero());
  std::vector<Trajectory> ens(2, run_micro(p, stepper(1.0 / 32, 8.0, 32), smooth_state(p), nullptr, nullptr));
  const auto m = moment_monitor(ens, 0.0, p);
  EXPECT_LT(m.back(), m[2]);
  EXPECT_THROW(moment_monitor(std::span<const Trajectory>(ens.data(), 1), 0.0, p), ValidationError);
}

}  // namespace
}  // namespace perfowave
