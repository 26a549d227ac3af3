#pragma once

// Semi-implicit Euler-Maruyama step shared by the microscopic and the
// homogenized solvers.
//
// Unknowns live on the active (non-Dirichlet) nodes with lumped mass M and
// stiffness K; optional boundary degrees of freedom (delta, theta) with
// surface weights S attach to active nodes through the incidence B:
//
//   u' = u + dt v'
//   M v' = M v + dt (-(K + M) u' + B S theta' - M v' + M sin u) + M dW1 + dt M g
//   delta' = delta + dt theta'
//   theta' = theta + dt (-theta'/eps^2 - delta' - B^T v') + dW2
//
// Eliminating u', delta' and theta' leaves one SPD system for v'.  Each of
// the three linear groups can be switched to explicit treatment.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <vector>

#include "perfowave/geometry.hpp"
#include "perfowave/linear_solver.hpp"

namespace perfowave {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct StepperFlags {
  bool implicit_laplacian = true;  ///< Laplacian and the -u term
  bool implicit_damping = true;    ///< -v and -theta/eps^2
  bool implicit_boundary = true;   ///< boundary stiffness -delta
};

struct WaveOperators {
  Eigen::VectorXd mass;      ///< active nodes
  SparseMatrix stiffness;    ///< active x active, symmetric positive definite
  std::vector<Eigen::Index> dof_node;  ///< active index of each boundary dof
  Eigen::VectorXd dof_weight;
  double eps = 1.0;

  Eigen::Index active_size() const { return mass.size(); }
  Eigen::Index dof_size() const { return dof_weight.size(); }

  /// B^T x: node values at the boundary dofs.
  Eigen::VectorXd trace(const Eigen::VectorXd& active_field) const;
  /// B S y: surface-weighted dof values summed onto nodes.
  Eigen::VectorXd lift(const Eigen::VectorXd& dof_field) const;
};

/// Builds lumped mass, the Dirichlet stiffness form of div(A grad .) and the
/// boundary incidence.  With a diagonal tensor the stiffness is the edge
/// (two-point flux) form; off-diagonal entries add cell-averaged gradient
/// cross terms.
WaveOperators make_wave_operators(const StructuredGrid& grid, const BoundaryDofMap& boundary,
                                  const Eigen::MatrixXd& tensor, double eps);

class WaveStepper {
public:
  WaveStepper(std::shared_ptr<const WaveOperators> ops, double dt, StepperFlags flags = {},
              CgOptions cg = {});

  double dt() const { return dt_; }
  const WaveOperators& operators() const { return *ops_; }
  const StepperFlags& flags() const { return flags_; }

  /// Advances active-node fields in place.  dw1 is the nodal noise
  /// increment, dw2 the per-dof increment (may be empty when there are no
  /// dofs), forcing (may be empty) is g at the new time level.
  CgReport advance(Eigen::Ref<Eigen::VectorXd> u, Eigen::Ref<Eigen::VectorXd> v,
                   Eigen::VectorXd& delta, Eigen::VectorXd& theta, const Eigen::VectorXd& dw1,
                   const Eigen::VectorXd& dw2, const Eigen::VectorXd& forcing) const;

private:
  std::shared_ptr<const WaveOperators> ops_;
  double dt_;
  StepperFlags flags_;
  CgOptions cg_;
  double theta_factor_;  ///< c = 1 + dt/eps^2 + dt^2 (implicit parts only)
  SparseMatrix system_;
  Eigen::VectorXd inv_diag_;
};

/// Throws BlowUpError when any entry is non-finite or exceeds 1e12.
void check_finite(const Eigen::VectorXd& x, std::size_t step, const char* what);

}  // namespace perfowave
