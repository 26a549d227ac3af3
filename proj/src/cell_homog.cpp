#include "perfowave/cell_homog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "perfowave/errors.hpp"
#include "perfowave/wave_stepper.hpp"

namespace perfowave {
namespace {

int aligned_count(double length, double h, const char* what, int axis) {
  const double n = length / h;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ValidationError(std::string("cell spacing does not align with the ") + what + " on axis " +
                          std::to_string(axis));
  }
  return static_cast<int>(r);
}

}  // namespace

std::string to_string(TensorVariant v) {
  return v == TensorVariant::GradientForm ? "gradient-form" : "paper-literal";
}

TensorVariant tensor_variant_from_string(const std::string& s) {
  if (s == "gradient-form") return TensorVariant::GradientForm;
  if (s == "paper-literal") return TensorVariant::PaperLiteral;
  throw ConfigError("variant", "expected gradient-form or paper-literal, got '" + s + "'");
}

EffectiveTensor EffectiveTensor::identity(int dim) {
  EffectiveTensor t;
  t.matrix = Eigen::MatrixXd::Identity(dim, dim);
  t.porosity = 1.0;
  return t;
}

double CellSolution::periodic_part(int i, std::int64_t node) const {
  const auto f = fluid_index[static_cast<std::size_t>(node)];
  return f < 0 ? 0.0 : phi[static_cast<std::size_t>(i)][f];
}

double CellSolution::corrector(int i, std::int64_t node) const {
  const auto p = lattice.node_index(node);
  return periodic_part(i, node) + p[static_cast<std::size_t>(i)] * spacing;
}

CellSolution solve_cell_problem(const UnitCellSpec& cell, double h_c, const CellSolveOptions& options) {
  cell.validate();
  if (!(h_c > 0.0)) throw ValidationError("cell spacing must be positive");
  const int d = cell.dim;

  CellSolution sol;
  sol.cell = cell;
  sol.spacing = h_c;
  sol.lattice.dim = d;
  sol.lattice.h = h_c;
  sol.lattice.periodic = true;
  std::array<int, 3> hole_lo{0, 0, 0}, hole_hi{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    sol.lattice.nodes[a] = aligned_count(cell.l[a], h_c, "cell edge", a);
    if (cell.hole) {
      hole_lo[a] = aligned_count(cell.hole->lower[a], h_c, "hole face", a);
      hole_hi[a] = aligned_count(cell.hole->upper[a], h_c, "hole face", a);
    }
  }
  const auto& lat = sol.lattice;

  sol.cell_fluid.assign(static_cast<std::size_t>(lat.cell_count()), 1);
  if (cell.hole) {
    for (std::int64_t cid = 0; cid < lat.cell_count(); ++cid) {
      const auto c = lat.cell_index(cid);
      bool inside = true;
      for (int a = 0; a < d; ++a) inside = inside && c[a] >= hole_lo[a] && c[a] < hole_hi[a];
      if (inside) sol.cell_fluid[static_cast<std::size_t>(cid)] = 0;
    }
  }
  if (std::none_of(sol.cell_fluid.begin(), sol.cell_fluid.end(), [](auto f) { return f != 0; })) {
    throw ValidationError("cell problem is singular: the hole fills the cell");
  }
  sol.fv = assemble_fv_mesh(lat, sol.cell_fluid);

  sol.fluid_index.assign(static_cast<std::size_t>(lat.node_count()), -1);
  for (std::int64_t id = 0; id < lat.node_count(); ++id) {
    if (sol.fv.node_volume[static_cast<std::size_t>(id)] > 0.0) {
      sol.fluid_index[static_cast<std::size_t>(id)] = static_cast<std::int64_t>(sol.fluid_nodes.size());
      sol.fluid_nodes.push_back(id);
    }
  }
  const auto n = static_cast<Eigen::Index>(sol.fluid_nodes.size());

  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& e : sol.fv.edges) {
    const auto ia = sol.fluid_index[static_cast<std::size_t>(e.a)];
    const auto ib = sol.fluid_index[static_cast<std::size_t>(e.b)];
    trip.emplace_back(ia, ia, e.coefficient);
    trip.emplace_back(ib, ib, e.coefficient);
    trip.emplace_back(ia, ib, -e.coefficient);
    trip.emplace_back(ib, ia, -e.coefficient);
  }
  SparseMatrix K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd inv_diag = K.diagonal().cwiseInverse();

  Eigen::VectorXd volume(n);
  for (Eigen::Index k = 0; k < n; ++k) volume[k] = sol.fv.node_volume[static_cast<std::size_t>(sol.fluid_nodes[static_cast<std::size_t>(k)])];

  // Nodes whose dual box is entirely fluid and touches no hole face.
  std::vector<std::uint8_t> interior(static_cast<std::size_t>(n), 1);
  const double full = std::pow(h_c, d);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (volume[k] < full * (1.0 - 1e-12)) interior[static_cast<std::size_t>(k)] = 0;
  }
  for (const auto& piece : sol.fv.boundary) {
    interior[static_cast<std::size_t>(sol.fluid_index[static_cast<std::size_t>(piece.node)])] = 0;
  }

  const auto apply = [&K](const Eigen::VectorXd& p, Eigen::VectorXd& q) { q.noalias() = K * p; };
  for (int i = 0; i < d; ++i) {
    // Minimiser of sum_e k_e (dphi_e + h [axis_e == i])^2.
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (const auto& e : sol.fv.edges) {
      if (e.axis != i) continue;
      b[sol.fluid_index[static_cast<std::size_t>(e.a)]] += h_c * e.coefficient;
      b[sol.fluid_index[static_cast<std::size_t>(e.b)]] -= h_c * e.coefficient;
    }
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
    const auto rep = solve_pcg(apply, b, inv_diag, phi, options.cg);
    sol.iterations += rep.iterations;
    sol.solver_residual = std::max(sol.solver_residual, rep.relative_residual);
    phi.array() -= volume.dot(phi) / volume.sum();

    const Eigen::VectorXd lap = -(K * phi - b);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (interior[static_cast<std::size_t>(k)]) {
        sol.harmonic_residual = std::max(sol.harmonic_residual, std::abs(lap[k]) / volume[k]);
      }
    }
    sol.phi.push_back(std::move(phi));
  }
  return sol;
}

EffectiveTensor effective_tensor(const CellSolution& sol, TensorVariant variant) {
  const int d = sol.dim();
  const double cell_volume = sol.cell.l.prod();
  EffectiveTensor out;
  out.variant = variant;
  out.porosity = sol.cell.porosity();
  out.matrix = Eigen::MatrixXd::Zero(d, d);
  const double h = sol.spacing;

  if (variant == TensorVariant::GradientForm) {
    Eigen::VectorXd grad(d);
    for (const auto& e : sol.fv.edges) {
      const auto ia = sol.fluid_index[static_cast<std::size_t>(e.a)];
      const auto ib = sol.fluid_index[static_cast<std::size_t>(e.b)];
      for (int i = 0; i < d; ++i) {
        const auto& phi = sol.phi[static_cast<std::size_t>(i)];
        grad[i] = phi[ib] - phi[ia] + (e.axis == i ? h : 0.0);
      }
      out.matrix.noalias() += e.coefficient * grad * grad.transpose();
    }
  } else {
    const auto& lat = sol.lattice;
    const int corners = 1 << d;
    const double vol = std::pow(h, d);
    Eigen::VectorXd w(d);
    for (std::int64_t cid = 0; cid < lat.cell_count(); ++cid) {
      if (!sol.cell_fluid[static_cast<std::size_t>(cid)]) continue;
      const auto c = lat.cell_index(cid);
      w.setZero();
      for (int k = 0; k < corners; ++k) {
        auto q = c;
        for (int a = 0; a < d; ++a) q[a] += (k >> a) & 1;
        const auto node = lat.node_at(q);
        for (int i = 0; i < d; ++i) w[i] += sol.periodic_part(i, node) + q[i] * h;
      }
      w /= corners;
      out.matrix.noalias() += vol * w * w.transpose();
    }
  }
  out.matrix /= cell_volume;
  return out;
}

RefinementStudy richardson_study(const std::vector<double>& spacings, std::vector<Eigen::MatrixXd> tensors,
                                 double porosity) {
  if (spacings.size() < 3 || tensors.size() != spacings.size()) {
    throw ValidationError("refinement study needs three spacings");
  }
  RefinementStudy study;
  study.spacings = spacings;
  study.tensors = std::move(tensors);
  study.porosity = porosity;
  const auto k = study.tensors.size();
  const Eigen::MatrixXd& a1 = study.tensors[k - 3];
  const Eigen::MatrixXd& a2 = study.tensors[k - 2];
  const Eigen::MatrixXd& a3 = study.tensors[k - 1];
  const double d12 = a1(0, 0) - a2(0, 0);
  const double d23 = a2(0, 0) - a3(0, 0);
  const double ratio = spacings[k - 2] / spacings[k - 1];
  if (std::abs(d23) < 1e-14 || d12 / d23 <= 0.0) {
    study.observed_order = std::abs(d23) < 1e-14 ? std::numeric_limits<double>::infinity() : 0.0;
    study.extrapolated = a3;
    return study;
  }
  study.observed_order = std::log(d12 / d23) / std::log(ratio);
  study.extrapolated = a3 + (a3 - a2) / (std::pow(ratio, study.observed_order) - 1.0);
  return study;
}

RefinementStudy refine_effective_tensor(const UnitCellSpec& cell, const std::vector<double>& spacings,
                                        const CellSolveOptions& options) {
  if (spacings.size() < 3) throw ValidationError("refinement study needs three spacings");
  std::vector<Eigen::MatrixXd> tensors;
  for (double h : spacings) tensors.push_back(effective_tensor(solve_cell_problem(cell, h, options)).matrix);
  return richardson_study(spacings, std::move(tensors), cell.porosity());
}

double interpolate_periodic_part(const CellSolution& sol, int i, const Eigen::VectorXd& y) {
  const auto& lat = sol.lattice;
  const int d = sol.dim();
  std::array<int, 3> base{0, 0, 0};
  std::array<double, 3> frac{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    const double l = sol.cell.l[a];
    double ya = std::fmod(y[a], l);
    if (ya < 0) ya += l;
    const double s = ya / sol.spacing;
    base[a] = static_cast<int>(std::floor(s));
    frac[a] = s - base[a];
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < (1 << d); ++k) {
    auto q = base;
    double wgt = 1.0;
    for (int a = 0; a < d; ++a) {
      const int bit = (k >> a) & 1;
      q[a] += bit;
      wgt *= bit ? frac[a] : 1.0 - frac[a];
    }
    const auto node = lat.node_at(q);
    if (sol.fluid_index[static_cast<std::size_t>(node)] < 0 || wgt == 0.0) continue;
    num += wgt * sol.periodic_part(i, node);
    den += wgt;
  }
  return den > 0.0 ? num / den : 0.0;
}

Eigen::VectorXd corrector_expand(const Eigen::VectorXd& u_macro, const StructuredGrid& grid,
                                 const CellSolution& sol, double eps) {
  if (u_macro.size() != grid.node_count()) throw ValidationError("corrector_expand: shape mismatch");
  if (sol.dim() != grid.dim()) throw ValidationError("corrector_expand: dimension mismatch");
  const auto& lat = grid.lattice();
  const int d = grid.dim();
  const double h = lat.h;
  Eigen::VectorXd out = u_macro;
  for (std::int64_t id = 0; id < grid.node_count(); ++id) {
    const auto p = lat.node_index(id);
    const Eigen::VectorXd x = grid.coordinates(id);
    double correction = 0.0;
    for (int i = 0; i < d; ++i) {
      auto lo = p, hi = p;
      double span = 2.0 * h;
      if (p[i] == 0) {
        lo[i] = p[i];
        hi[i] = p[i] + 1;
        span = h;
      } else if (p[i] == lat.nodes[i] - 1) {
        lo[i] = p[i] - 1;
        hi[i] = p[i];
        span = h;
      } else {
        lo[i] = p[i] - 1;
        hi[i] = p[i] + 1;
      }
      const double gi = (u_macro[lat.node_id(hi)] - u_macro[lat.node_id(lo)]) / span;
      if (gi != 0.0) correction += gi * interpolate_periodic_part(sol, i, x / eps);
    }
    out[id] += eps * correction;
  }
  return out;
}

}  // namespace perfowave
