#include "perfowave/wave_stepper.hpp"

#include <cmath>

#include "perfowave/errors.hpp"

namespace perfowave {

Eigen::VectorXd WaveOperators::trace(const Eigen::VectorXd& active_field) const {
  Eigen::VectorXd out(dof_size());
  for (Eigen::Index k = 0; k < dof_size(); ++k) out[k] = active_field[dof_node[static_cast<std::size_t>(k)]];
  return out;
}

Eigen::VectorXd WaveOperators::lift(const Eigen::VectorXd& dof_field) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(active_size());
  for (Eigen::Index k = 0; k < dof_size(); ++k) {
    out[dof_node[static_cast<std::size_t>(k)]] += dof_weight[k] * dof_field[k];
  }
  return out;
}

WaveOperators make_wave_operators(const StructuredGrid& grid, const BoundaryDofMap& boundary,
                                  const Eigen::MatrixXd& tensor, double eps) {
  const int d = grid.dim();
  if (tensor.rows() != d || tensor.cols() != d) throw ValidationError("tensor dimension mismatch");
  const auto n_active = grid.active_count();

  WaveOperators ops;
  ops.eps = eps;
  ops.mass = grid.fluid_mass().head(n_active);

  auto active = [&](std::int64_t node) -> std::int64_t {
    const auto f = grid.fluid_index(node);
    return (f >= 0 && f < n_active) ? f : -1;
  };

  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& e : grid.fv().edges) {
    const double c = e.coefficient * tensor(e.axis, e.axis);
    const auto ia = active(e.a);
    const auto ib = active(e.b);
    if (ia >= 0) trip.emplace_back(ia, ia, c);
    if (ib >= 0) trip.emplace_back(ib, ib, c);
    if (ia >= 0 && ib >= 0) {
      trip.emplace_back(ia, ib, -c);
      trip.emplace_back(ib, ia, -c);
    }
  }

  bool cross = false;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if (a != b && tensor(a, b) != 0.0) cross = true;
  if (cross) {
    const auto& lat = grid.lattice();
    const int corners = 1 << d;
    const double h = lat.h;
    const double vol = std::pow(h, d);
    const double scale = 1.0 / ((1 << (d - 1)) * h);
    for (std::int64_t cid = 0; cid < lat.cell_count(); ++cid) {
      if (!grid.cell_is_fluid(cid)) continue;
      const auto c = lat.cell_index(cid);
      std::vector<std::int64_t> idx(static_cast<std::size_t>(corners));
      Eigen::MatrixXd g(d, corners);  // averaged gradient weights
      for (int k = 0; k < corners; ++k) {
        auto q = c;
        for (int a = 0; a < d; ++a) {
          q[a] += (k >> a) & 1;
          g(a, k) = ((k >> a) & 1 ? 1.0 : -1.0) * scale;
        }
        idx[static_cast<std::size_t>(k)] = active(lat.node_id(q));
      }
      Eigen::MatrixXd offdiag = tensor;
      offdiag.diagonal().setZero();
      const Eigen::MatrixXd local = vol * g.transpose() * offdiag * g;
      for (int i = 0; i < corners; ++i) {
        if (idx[static_cast<std::size_t>(i)] < 0) continue;
        for (int j = 0; j < corners; ++j) {
          if (idx[static_cast<std::size_t>(j)] < 0) continue;
          trip.emplace_back(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)], local(i, j));
        }
      }
    }
  }
  ops.stiffness.resize(n_active, n_active);
  ops.stiffness.setFromTriplets(trip.begin(), trip.end());

  ops.dof_node.reserve(boundary.size());
  for (const auto& dof : boundary.dofs) {
    if (dof.fluid < 0 || dof.fluid >= n_active) throw ValidationError("boundary dof on a non-active node");
    ops.dof_node.push_back(dof.fluid);
  }
  ops.dof_weight = boundary.weights();
  return ops;
}

WaveStepper::WaveStepper(std::shared_ptr<const WaveOperators> ops, double dt, StepperFlags flags,
                         CgOptions cg)
    : ops_(std::move(ops)), dt_(dt), flags_(flags), cg_(cg) {
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  const auto& op = *ops_;
  const double eps2 = op.eps * op.eps;
  theta_factor_ = 1.0 + (flags_.implicit_damping ? dt / eps2 : 0.0) +
                  (flags_.implicit_boundary ? dt * dt : 0.0);

  Eigen::VectorXd diag = op.mass * (1.0 + (flags_.implicit_damping ? dt : 0.0));
  if (flags_.implicit_laplacian) diag += dt * dt * op.mass;
  for (Eigen::Index k = 0; k < op.dof_size(); ++k) {
    diag[op.dof_node[static_cast<std::size_t>(k)]] += dt * dt / theta_factor_ * op.dof_weight[k];
  }
  SparseMatrix diag_mat(op.active_size(), op.active_size());
  diag_mat.reserve(Eigen::VectorXi::Constant(op.active_size(), 1));
  for (Eigen::Index i = 0; i < op.active_size(); ++i) diag_mat.insert(i, i) = diag[i];
  if (flags_.implicit_laplacian) {
    system_ = diag_mat + (dt * dt) * op.stiffness;
  } else {
    system_ = diag_mat;
  }
  system_.makeCompressed();
  inv_diag_ = system_.diagonal().cwiseInverse();
}

CgReport WaveStepper::advance(Eigen::Ref<Eigen::VectorXd> u, Eigen::Ref<Eigen::VectorXd> v,
                              Eigen::VectorXd& delta, Eigen::VectorXd& theta,
                              const Eigen::VectorXd& dw1, const Eigen::VectorXd& dw2,
                              const Eigen::VectorXd& forcing) const {
  const auto& op = *ops_;
  const double dt = dt_;
  const double eps2 = op.eps * op.eps;
  const Eigen::VectorXd& m = op.mass;

  Eigen::VectorXd rhs = m.cwiseProduct(v);
  if (!flags_.implicit_damping) rhs -= dt * m.cwiseProduct(v);
  rhs.noalias() -= dt * (op.stiffness * u);
  rhs += m.cwiseProduct(dt * (u.array().sin() - u.array()).matrix() + dw1);
  if (forcing.size() > 0) rhs += dt * m.cwiseProduct(forcing);

  Eigen::VectorXd theta_rhs;
  if (op.dof_size() > 0) {
    theta_rhs = theta - dt * delta;
    if (!flags_.implicit_damping) theta_rhs -= (dt / eps2) * theta;
    if (dw2.size() > 0) theta_rhs += dw2;
    rhs += (dt / theta_factor_) * op.lift(theta_rhs);
  }

  Eigen::VectorXd v_new = v;
  const auto apply = [this](const Eigen::VectorXd& p, Eigen::VectorXd& q) { q.noalias() = system_ * p; };
  const CgReport report = solve_pcg(apply, rhs, inv_diag_, v_new, cg_);

  u += dt * v_new;
  v = v_new;
  if (op.dof_size() > 0) {
    theta = (theta_rhs - dt * op.trace(v_new)) / theta_factor_;
    delta += dt * theta;
  }
  return report;
}

void check_finite(const Eigen::VectorXd& x, std::size_t step, const char* what) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || std::abs(x[i]) > 1e12) throw BlowUpError(step, what);
  }
}

}  // namespace perfowave
