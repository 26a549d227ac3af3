#pragma once

// Vertex-centred finite-volume data on a uniform lattice whose cells are
// either entirely fluid or entirely solid (hole faces lie on lattice planes).
//
// Every node owns the dual box [x - h/2, x + h/2]^d; its volume, the dual
// face areas of the lattice edges and the pieces of hole surface falling in
// the box are all read off the cell mask.  The resulting stiffness form is
// the Neumann (ghost node) Laplacian at nodes on hole faces.

#include <array>
#include <cstdint>
#include <vector>

namespace perfowave {

/// Uniform node lattice in d = 2 or 3 dimensions, optionally periodic.
struct Lattice {
  int dim = 2;
  std::array<int, 3> nodes{1, 1, 1};  ///< node counts per axis
  double h = 1.0;
  bool periodic = false;

  int cells(int axis) const { return periodic ? nodes[axis] : nodes[axis] - 1; }
  std::int64_t node_count() const;
  std::int64_t cell_count() const;

  std::int64_t node_id(const std::array<int, 3>& idx) const;
  std::array<int, 3> node_index(std::int64_t id) const;
  std::int64_t cell_id(const std::array<int, 3>& idx) const;
  std::array<int, 3> cell_index(std::int64_t id) const;

  /// Wraps (periodic) or rejects (returns -1) an out-of-range cell index.
  std::int64_t cell_at(std::array<int, 3> idx) const;
  std::int64_t node_at(std::array<int, 3> idx) const;
};

/// Lattice edge (p, p + e_axis) with coefficient = dual face area / h.
struct FvEdge {
  std::int64_t a;
  std::int64_t b;
  int axis;
  double coefficient;
};

/// Part of a hole face attributed to one node; normal points into the hole.
struct FvBoundaryPiece {
  std::int64_t node;
  int axis;
  int sign;  ///< +1 or -1: the outward normal of the fluid region is sign * e_axis
  double weight;
  std::int64_t solid_cell;  ///< a hole cell adjacent to the face
};

struct FvMesh {
  std::vector<double> node_volume;  ///< fluid part of the dual box, per node
  std::vector<FvEdge> edges;        ///< edges with positive fluid face area
  std::vector<FvBoundaryPiece> boundary;  ///< aggregated per (node, axis, sign)
};

/// Assembles FV geometry for the given fluid-cell mask (1 = fluid, 0 = solid).
FvMesh assemble_fv_mesh(const Lattice& lattice, const std::vector<std::uint8_t>& cell_fluid);

}  // namespace perfowave
