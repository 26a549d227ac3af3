#pragma once

// Jacobi-preconditioned conjugate gradients for symmetric positive
// (semi-)definite systems.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

#include "perfowave/errors.hpp"

namespace perfowave {

struct CgOptions {
  double relative_tolerance = 1e-10;
  std::size_t max_iterations = 20000;
  /// Project iterates and residuals onto mean-zero vectors (constant null space).
  bool project_constants = false;
};

struct CgReport {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

namespace detail {
template <typename Vector>
void remove_mean(Vector& x) {
  x.array() -= x.mean();
}
}  // namespace detail

/// Solves A x = b with x as the initial guess.  `apply(p, q)` must compute
/// q = A p; `inv_diag` holds the reciprocal diagonal of A.
///
/// Convergence is declared on the true-residual norm relative to ||b||.
/// Throws SolverError when max_iterations is reached first.
template <typename Apply, typename Scalar>
CgReport solve_pcg(Apply&& apply, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b,
                   const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& inv_diag,
                   Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, const CgOptions& opt = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  CgReport report;
  Vector rhs = b;
  if (opt.project_constants) detail::remove_mean(rhs);
  const Scalar b_norm = rhs.norm();
  if (b_norm == Scalar(0)) {
    x.setZero();
    return report;
  }
  if (opt.project_constants) detail::remove_mean(x);

  Vector r(rhs.size()), q(rhs.size());
  apply(x, q);
  r = rhs - q;
  if (opt.project_constants) detail::remove_mean(r);
  Scalar r_norm = r.norm();
  report.relative_residual = static_cast<double>(r_norm / b_norm);
  if (report.relative_residual <= opt.relative_tolerance) return report;

  Vector z = inv_diag.cwiseProduct(r);
  if (opt.project_constants) detail::remove_mean(z);
  Vector p = z;
  Scalar rz = r.dot(z);

  while (report.iterations < opt.max_iterations) {
    ++report.iterations;
    apply(p, q);
    const Scalar alpha = rz / p.dot(q);
    x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    if (opt.project_constants) detail::remove_mean(r);
    r_norm = r.norm();
    report.relative_residual = static_cast<double>(r_norm / b_norm);
    if (report.relative_residual <= opt.relative_tolerance) {
      // Guard against drift of the recursive residual.
      apply(x, q);
      Vector true_r = rhs - q;
      if (opt.project_constants) detail::remove_mean(true_r);
      report.relative_residual = static_cast<double>(true_r.norm() / b_norm);
      if (report.relative_residual <= opt.relative_tolerance) break;
      r = true_r;
    }
    z = inv_diag.cwiseProduct(r);
    if (opt.project_constants) detail::remove_mean(z);
    const Scalar rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (report.relative_residual > opt.relative_tolerance) {
    throw SolverError("conjugate gradients did not converge", report.iterations,
                      report.relative_residual);
  }
  if (opt.project_constants) detail::remove_mean(x);
  return report;
}

}  // namespace perfowave
