#pragma once

// Periodic cell problems on the perforated unit cell Y* and the effective
// (homogenized) tensor.
//
// For each direction i the corrector w_i = y_i + phi_i solves
//   Lap w_i = 0 in Y*,  w_i - y_i Y-periodic,  dw_i/dn = 0 on dS,
// i.e. phi_i is periodic, harmonic, with flux -n_i on the hole surface,
// normalised to zero mean over Y*.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "perfowave/fv_mesh.hpp"
#include "perfowave/geometry.hpp"
#include "perfowave/linear_solver.hpp"

namespace perfowave {

enum class TensorVariant { GradientForm, PaperLiteral };

std::string to_string(TensorVariant v);
TensorVariant tensor_variant_from_string(const std::string& s);

struct CellSolution {
  UnitCellSpec cell;
  Lattice lattice;                     ///< periodic node lattice on Y
  std::vector<std::uint8_t> cell_fluid;
  FvMesh fv;
  std::vector<std::int64_t> fluid_nodes;   ///< lattice ids of unknowns
  std::vector<std::int64_t> fluid_index;   ///< lattice id -> unknown or -1
  std::vector<Eigen::VectorXd> phi;        ///< w_i - y_i on fluid nodes
  double spacing = 0.0;
  double solver_residual = 0.0;            ///< worst CG relative residual
  double harmonic_residual = 0.0;          ///< max |Lap_h w_i| at interior fluid nodes
  std::size_t iterations = 0;

  int dim() const { return cell.dim; }
  /// Corrector value w_i at a lattice node (y_i taken in [0, l_i)).
  double corrector(int i, std::int64_t node) const;
  /// Periodic part phi_i at a lattice node (0 for nodes inside the hole).
  double periodic_part(int i, std::int64_t node) const;
};

struct EffectiveTensor {
  Eigen::MatrixXd matrix;
  double porosity = 1.0;
  TensorVariant variant = TensorVariant::GradientForm;

  static EffectiveTensor identity(int dim);
};

struct CellSolveOptions {
  CgOptions cg{1e-12, 200000, true};
};

/// Throws ValidationError when the spacing does not align with the cell and
/// hole, or the hole leaves no connected fluid region.
CellSolution solve_cell_problem(const UnitCellSpec& cell, double h_c, const CellSolveOptions& options = {});

/// gradient-form: (1/|Y|) int_{Y*} grad w_i . grad w_j
/// paper-literal: (1/|Y|) int_{Y*} w_i w_j (midpoint rule over fluid cells)
EffectiveTensor effective_tensor(const CellSolution& sol, TensorVariant variant = TensorVariant::GradientForm);

/// Richardson study of the gradient-form tensor over a spacing sequence.
struct RefinementStudy {
  std::vector<double> spacings;
  std::vector<Eigen::MatrixXd> tensors;
  Eigen::MatrixXd extrapolated;
  double observed_order = 0.0;  ///< from the (1,1) entry of the last three levels
  double porosity = 1.0;
};
/// Observed order from the (1,1) entry of the last three levels and the
/// Richardson extrapolation built on it.
RefinementStudy richardson_study(const std::vector<double>& spacings, std::vector<Eigen::MatrixXd> tensors,
                                 double porosity);
RefinementStudy refine_effective_tensor(const UnitCellSpec& cell, const std::vector<double>& spacings,
                                        const CellSolveOptions& options = {});

/// u + eps * sum_i du/dx_i * (w_i(y) - y_i), y = x/eps mod Y, on the nodes of
/// `grid`.  The gradient is taken by central differences of u on the grid.
Eigen::VectorXd corrector_expand(const Eigen::VectorXd& u_macro, const StructuredGrid& grid,
                                 const CellSolution& sol, double eps);

/// Periodic part phi_i at an arbitrary cell point by multilinear
/// interpolation over the fluid corners of the enclosing lattice cell.
double interpolate_periodic_part(const CellSolution& sol, int i, const Eigen::VectorXd& y);

}  // namespace perfowave
