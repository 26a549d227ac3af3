#pragma once

// Periodically perforated box domains on aligned structured grids.
//
// A unit cell Y = [0, l_1) x ... x [0, l_d) carries an optional axis-aligned
// box hole S.  The perforated domain keeps every translate eps*(k*l + S) whose
// closure lies inside the open outer box D; holes touching the outer boundary
// are dropped.  Grid spacing must put every hole face on a grid plane.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "perfowave/fv_mesh.hpp"

namespace perfowave {

/// Axis-aligned box given by its lower and upper corners.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const { return static_cast<int>(lower.size()); }
  Eigen::VectorXd extent() const { return upper - lower; }
  double volume() const { return extent().prod(); }
};

struct UnitCellSpec {
  int dim = 2;
  Eigen::VectorXd l;        ///< cell edge lengths
  std::optional<Box> hole;  ///< in cell coordinates; empty means no hole

  /// |Y*| / |Y| by box arithmetic.
  double porosity() const;
  /// Throws ValidationError unless the hole closure sits strictly inside Y.
  void validate() const;

  static UnitCellSpec unit_square(std::optional<Box> hole = std::nullopt);
};

struct PerforatedDomainSpec {
  Box domain;
  double eps = 1.0;
  UnitCellSpec cell;
  std::vector<Box> holes;                   ///< retained holes in physical coordinates
  std::vector<Eigen::VectorXi> hole_shifts;  ///< integer shift k of each hole
};

enum class NodeClass : std::uint8_t { FluidInterior, HoleInterior, HoleBoundary, OuterBoundary };

/// Node lattice over D with node classes and finite-volume geometry.
///
/// Fluid nodes (every class except HoleInterior) are numbered with the
/// active ones first and the outer-boundary nodes last, so a fluid field
/// restricted to its first `active_count()` entries is the Dirichlet
/// unknown vector.
class StructuredGrid {
public:
  StructuredGrid() = default;
  StructuredGrid(const Box& domain, double h, std::vector<std::uint8_t> cell_fluid,
                 std::vector<int> cell_hole);

  int dim() const { return lattice_.dim; }
  double spacing() const { return lattice_.h; }
  const Lattice& lattice() const { return lattice_; }
  const Box& domain() const { return domain_; }
  std::int64_t node_count() const { return lattice_.node_count(); }

  Eigen::VectorXd coordinates(std::int64_t node) const;
  NodeClass node_class(std::int64_t node) const { return classes_[static_cast<std::size_t>(node)]; }
  const std::vector<NodeClass>& classes() const { return classes_; }

  bool cell_is_fluid(std::int64_t cell) const { return cell_fluid_[static_cast<std::size_t>(cell)] != 0; }
  int cell_hole(std::int64_t cell) const { return cell_hole_[static_cast<std::size_t>(cell)]; }
  const std::vector<std::uint8_t>& cell_fluid() const { return cell_fluid_; }

  const FvMesh& fv() const { return fv_; }

  std::int64_t fluid_count() const { return static_cast<std::int64_t>(fluid_nodes_.size()); }
  std::int64_t active_count() const { return active_count_; }
  const std::vector<std::int64_t>& fluid_nodes() const { return fluid_nodes_; }
  /// Fluid index of a grid node, or -1 for hole-interior nodes.
  std::int64_t fluid_index(std::int64_t node) const { return fluid_index_[static_cast<std::size_t>(node)]; }

  /// Dual volumes of the fluid nodes (fluid numbering).
  const Eigen::VectorXd& fluid_mass() const { return fluid_mass_; }
  /// L2(D) quadrature weight per grid node: fluid part of its dual box.
  const Eigen::VectorXd& node_weights() const { return node_weights_; }

private:
  Box domain_;
  Lattice lattice_;
  std::vector<NodeClass> classes_;
  std::vector<std::uint8_t> cell_fluid_;
  std::vector<int> cell_hole_;
  FvMesh fv_;
  std::vector<std::int64_t> fluid_nodes_;
  std::vector<std::int64_t> fluid_index_;
  std::int64_t active_count_ = 0;
  Eigen::VectorXd fluid_mass_;
  Eigen::VectorXd node_weights_;
};

/// One degree of freedom of the boundary fields (delta, theta): the part of
/// one hole face attached to one node.
struct BoundaryDof {
  std::int64_t node;   ///< grid node
  std::int64_t fluid;  ///< fluid index of the node (always active)
  int hole;
  int axis;
  int sign;       ///< outward normal of the fluid region = sign * e_axis
  double weight;  ///< surface measure (area units)

  Eigen::VectorXd normal(int dim) const {
    Eigen::VectorXd n = Eigen::VectorXd::Zero(dim);
    n[axis] = sign;
    return n;
  }
};

struct BoundaryDofMap {
  std::vector<BoundaryDof> dofs;

  std::size_t size() const { return dofs.size(); }
  bool empty() const { return dofs.empty(); }
  double total_weight() const;
  Eigen::VectorXd weights() const;
};

struct PerforatedDomain {
  PerforatedDomainSpec spec;
  StructuredGrid grid;
  BoundaryDofMap boundary;
};

/// Enumerates retained holes, classifies the grid and builds boundary DOFs.
/// Throws ConfigError naming `grid.h` and the axis when spacing and geometry
/// do not align.
PerforatedDomain build_perforated_domain(const Box& domain, double eps, const UnitCellSpec& cell,
                                         double h);

/// Hole-free grid on D (the macroscopic grid).
PerforatedDomain build_box_domain(const Box& domain, double h);

/// 1 on D^eps (closure), 0 at hole-interior nodes.
Eigen::VectorXd indicator_field(const StructuredGrid& grid);

/// Extends a fluid-numbered field by zero into the holes (grid numbering).
Eigen::VectorXd zero_extend(const Eigen::VectorXd& fluid_field, const StructuredGrid& grid);

/// Squared L2(D) norm of a grid-numbered field.
double l2_norm_squared_domain(const Eigen::VectorXd& field, const StructuredGrid& grid);
/// Squared L2(D^eps) norm of a fluid-numbered field, same quadrature weights.
double l2_norm_squared_fluid(const Eigen::VectorXd& fluid_field, const StructuredGrid& grid);

Box make_box(std::initializer_list<double> lower, std::initializer_list<double> upper);

}  // namespace perfowave
