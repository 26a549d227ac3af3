#include "perfowave/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "perfowave/errors.hpp"

namespace perfowave {
namespace {

constexpr double kAlignTol = 1e-9;

// Returns the integer n with x == n within a relative tolerance, or nullopt.
std::optional<long> as_integer(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= kAlignTol * std::max(1.0, std::abs(x))) return static_cast<long>(r);
  return std::nullopt;
}

std::string axis_name(int a) { return "axis " + std::to_string(a); }

Lattice make_lattice(const Box& domain, double h) {
  Lattice lat;
  lat.dim = domain.dim();
  lat.h = h;
  lat.periodic = false;
  for (int a = 0; a < lat.dim; ++a) {
    const auto n = as_integer(domain.extent()[a] / h);
    if (!n || *n < 2) {
      std::ostringstream msg;
      msg << "spacing " << h << " does not divide the domain edge " << domain.extent()[a] << " on "
          << axis_name(a);
      throw ConfigError("grid.h", msg.str());
    }
    lat.nodes[a] = static_cast<int>(*n) + 1;
  }
  return lat;
}

void validate_box(const Box& box, const char* what) {
  if (box.lower.size() != box.upper.size() || box.lower.size() < 2 || box.lower.size() > 3) {
    throw ValidationError(std::string(what) + ": dimension must be 2 or 3");
  }
  if ((box.upper.array() <= box.lower.array()).any()) {
    throw ValidationError(std::string(what) + ": upper corner must exceed lower corner");
  }
}

}  // namespace

double UnitCellSpec::porosity() const {
  if (!hole) return 1.0;
  return 1.0 - hole->volume() / l.prod();
}

void UnitCellSpec::validate() const {
  if (dim < 2 || dim > 3) throw ValidationError("cell: dimension must be 2 or 3");
  if (l.size() != dim || (l.array() <= 0.0).any()) {
    throw ValidationError("cell: edge lengths must be positive, one per axis");
  }
  if (!hole) return;
  if (hole->dim() != dim) throw ValidationError("cell.hole: dimension mismatch");
  for (int a = 0; a < dim; ++a) {
    if (!(hole->lower[a] > 0.0 && hole->upper[a] < l[a] && hole->lower[a] < hole->upper[a])) {
      throw ValidationError("cell.hole: hole closure must lie strictly inside the cell on " +
                            axis_name(a));
    }
  }
}

UnitCellSpec UnitCellSpec::unit_square(std::optional<Box> hole) {
  UnitCellSpec cell;
  cell.dim = 2;
  cell.l = Eigen::Vector2d(1.0, 1.0);
  cell.hole = std::move(hole);
  return cell;
}

StructuredGrid::StructuredGrid(const Box& domain, double h, std::vector<std::uint8_t> cell_fluid,
                               std::vector<int> cell_hole)
    : domain_(domain),
      lattice_(make_lattice(domain, h)),
      cell_fluid_(std::move(cell_fluid)),
      cell_hole_(std::move(cell_hole)) {
  fv_ = assemble_fv_mesh(lattice_, cell_fluid_);
  const auto n = lattice_.node_count();
  const int d = lattice_.dim;
  const int corners = 1 << d;
  classes_.resize(static_cast<std::size_t>(n));
  for (std::int64_t id = 0; id < n; ++id) {
    const auto p = lattice_.node_index(id);
    bool outer = false;
    for (int a = 0; a < d; ++a) outer = outer || p[a] == 0 || p[a] == lattice_.nodes[a] - 1;
    if (outer) {
      classes_[static_cast<std::size_t>(id)] = NodeClass::OuterBoundary;
      continue;
    }
    int solid = 0;
    for (int off = 0; off < corners; ++off) {
      auto c = p;
      for (int a = 0; a < d; ++a) c[a] -= (off >> a) & 1;
      if (!cell_fluid_[static_cast<std::size_t>(lattice_.cell_at(c))]) ++solid;
    }
    classes_[static_cast<std::size_t>(id)] = solid == corners ? NodeClass::HoleInterior
                                             : solid > 0      ? NodeClass::HoleBoundary
                                                              : NodeClass::FluidInterior;
  }

  fluid_index_.assign(static_cast<std::size_t>(n), -1);
  for (std::int64_t id = 0; id < n; ++id) {
    const auto c = classes_[static_cast<std::size_t>(id)];
    if (c == NodeClass::FluidInterior || c == NodeClass::HoleBoundary) {
      fluid_index_[static_cast<std::size_t>(id)] = static_cast<std::int64_t>(fluid_nodes_.size());
      fluid_nodes_.push_back(id);
    }
  }
  active_count_ = static_cast<std::int64_t>(fluid_nodes_.size());
  for (std::int64_t id = 0; id < n; ++id) {
    if (classes_[static_cast<std::size_t>(id)] == NodeClass::OuterBoundary) {
      fluid_index_[static_cast<std::size_t>(id)] = static_cast<std::int64_t>(fluid_nodes_.size());
      fluid_nodes_.push_back(id);
    }
  }

  node_weights_ = Eigen::Map<const Eigen::VectorXd>(fv_.node_volume.data(), n);
  fluid_mass_.resize(static_cast<Eigen::Index>(fluid_nodes_.size()));
  for (std::size_t i = 0; i < fluid_nodes_.size(); ++i) {
    fluid_mass_[static_cast<Eigen::Index>(i)] = node_weights_[fluid_nodes_[i]];
  }
}

Eigen::VectorXd StructuredGrid::coordinates(std::int64_t node) const {
  const auto p = lattice_.node_index(node);
  Eigen::VectorXd x(lattice_.dim);
  for (int a = 0; a < lattice_.dim; ++a) x[a] = domain_.lower[a] + p[a] * lattice_.h;
  return x;
}

double BoundaryDofMap::total_weight() const {
  double s = 0.0;
  for (const auto& dof : dofs) s += dof.weight;
  return s;
}

Eigen::VectorXd BoundaryDofMap::weights() const {
  Eigen::VectorXd w(static_cast<Eigen::Index>(dofs.size()));
  for (std::size_t k = 0; k < dofs.size(); ++k) w[static_cast<Eigen::Index>(k)] = dofs[k].weight;
  return w;
}

PerforatedDomain build_perforated_domain(const Box& domain, double eps, const UnitCellSpec& cell,
                                         double h) {
  validate_box(domain, "domain");
  cell.validate();
  if (cell.dim != domain.dim()) throw ValidationError("cell and domain dimensions differ");
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("grid.eps", "eps must lie in (0, 1)");
  if (!(h > 0.0)) throw ConfigError("grid.h", "spacing must be positive");

  const int d = domain.dim();
  const Lattice lat = make_lattice(domain, h);

  PerforatedDomain out;
  out.spec.domain = domain;
  out.spec.eps = eps;
  out.spec.cell = cell;

  std::vector<std::uint8_t> cell_fluid(static_cast<std::size_t>(lat.cell_count()), 1);
  std::vector<int> cell_hole(cell_fluid.size(), -1);

  if (cell.hole) {
    const Box& s = *cell.hole;
    for (int a = 0; a < d; ++a) {
      if (!(eps * cell.l[a] < domain.extent()[a])) {
        throw ConfigError("grid.eps", "eps*l exceeds the domain edge on " + axis_name(a));
      }
      const bool aligned = as_integer(eps * cell.l[a] / h) &&
                           as_integer((eps * s.lower[a] - domain.lower[a]) / h) &&
                           as_integer((eps * s.upper[a] - domain.lower[a]) / h);
      if (!aligned) {
        std::ostringstream msg;
        msg << "spacing " << h << " does not divide eps*l = " << eps * cell.l[a]
            << " (or the hole faces) on " << axis_name(a);
        throw ConfigError("grid.h", msg.str());
      }
    }

    // Brute-force enumeration of integer shifts with closure inside open D.
    Eigen::VectorXi k_lo(d), k_hi(d);
    for (int a = 0; a < d; ++a) {
      const double period = eps * cell.l[a];
      k_lo[a] = static_cast<int>(std::floor(domain.lower[a] / period)) - 1;
      k_hi[a] = static_cast<int>(std::ceil(domain.upper[a] / period)) + 1;
    }
    const double tol = 1e-12 * std::max(1.0, domain.extent().maxCoeff());
    Eigen::VectorXi k = k_lo;
    while (true) {
      Box hole{eps * (k.cast<double>().cwiseProduct(cell.l) + s.lower),
               eps * (k.cast<double>().cwiseProduct(cell.l) + s.upper)};
      const bool inside = ((hole.lower - domain.lower).array() > tol).all() &&
                          ((domain.upper - hole.upper).array() > tol).all();
      if (inside) {
        out.spec.holes.push_back(hole);
        out.spec.hole_shifts.push_back(k);
      }
      int a = 0;
      while (a < d && ++k[a] > k_hi[a]) {
        k[a] = k_lo[a];
        ++a;
      }
      if (a == d) break;
    }

    for (std::size_t id = 0; id < out.spec.holes.size(); ++id) {
      const Box& hole = out.spec.holes[id];
      std::array<int, 3> lo{0, 0, 0}, hi{1, 1, 1};
      for (int a = 0; a < d; ++a) {
        lo[a] = static_cast<int>(std::lround((hole.lower[a] - domain.lower[a]) / h));
        hi[a] = static_cast<int>(std::lround((hole.upper[a] - domain.lower[a]) / h));
      }
      std::array<int, 3> c{0, 0, 0};
      for (c[2] = lo[2]; c[2] < hi[2]; ++c[2]) {
        for (c[1] = lo[1]; c[1] < hi[1]; ++c[1]) {
          for (c[0] = lo[0]; c[0] < hi[0]; ++c[0]) {
            const auto cid = static_cast<std::size_t>(lat.cell_id(c));
            cell_fluid[cid] = 0;
            cell_hole[cid] = static_cast<int>(id);
          }
        }
      }
    }
  }

  out.grid = StructuredGrid(domain, h, std::move(cell_fluid), std::move(cell_hole));

  for (const auto& piece : out.grid.fv().boundary) {
    BoundaryDof dof;
    dof.node = piece.node;
    dof.fluid = out.grid.fluid_index(piece.node);
    dof.hole = out.grid.cell_hole(piece.solid_cell);
    dof.axis = piece.axis;
    dof.sign = piece.sign;
    dof.weight = piece.weight;
    out.boundary.dofs.push_back(dof);
  }
  std::sort(out.boundary.dofs.begin(), out.boundary.dofs.end(),
            [](const BoundaryDof& a, const BoundaryDof& b) {
              return std::tie(a.node, a.axis, a.sign) < std::tie(b.node, b.axis, b.sign);
            });
  return out;
}

PerforatedDomain build_box_domain(const Box& domain, double h) {
  UnitCellSpec cell;
  cell.dim = domain.dim();
  cell.l = Eigen::VectorXd::Ones(cell.dim);
  return build_perforated_domain(domain, 0.5, cell, h);
}

Eigen::VectorXd indicator_field(const StructuredGrid& grid) {
  Eigen::VectorXd chi(grid.node_count());
  for (std::int64_t id = 0; id < grid.node_count(); ++id) {
    chi[id] = grid.node_class(id) == NodeClass::HoleInterior ? 0.0 : 1.0;
  }
  return chi;
}

Eigen::VectorXd zero_extend(const Eigen::VectorXd& fluid_field, const StructuredGrid& grid) {
  if (fluid_field.size() != grid.fluid_count()) {
    throw ValidationError("zero_extend: field has " + std::to_string(fluid_field.size()) +
                          " entries, grid has " + std::to_string(grid.fluid_count()) +
                          " fluid nodes");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.node_count());
  const auto& nodes = grid.fluid_nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) out[nodes[i]] = fluid_field[static_cast<Eigen::Index>(i)];
  return out;
}

double l2_norm_squared_domain(const Eigen::VectorXd& field, const StructuredGrid& grid) {
  if (field.size() != grid.node_count()) throw ValidationError("l2 norm: shape mismatch");
  return (grid.node_weights().array() * field.array().square()).sum();
}

double l2_norm_squared_fluid(const Eigen::VectorXd& fluid_field, const StructuredGrid& grid) {
  if (fluid_field.size() != grid.fluid_count()) throw ValidationError("l2 norm: shape mismatch");
  return (grid.fluid_mass().array() * fluid_field.array().square()).sum();
}

Box make_box(std::initializer_list<double> lower, std::initializer_list<double> upper) {
  Box b;
  b.lower = Eigen::Map<const Eigen::VectorXd>(lower.begin(), static_cast<Eigen::Index>(lower.size()));
  b.upper = Eigen::Map<const Eigen::VectorXd>(upper.begin(), static_cast<Eigen::Index>(upper.size()));
  return b;
}

}  // namespace perfowave
