#pragma once

// Trace-class Q-Wiener processes on the outer box via truncated
// Karhunen-Loeve expansions in the Dirichlet sine basis.
//
//   W(t) = sum_{i<=M} sqrt(alpha_i) beta_i(t) e_i
//
// Normal variates come from a counter-based generator keyed by
// (seed, path, process, step, mode): no generator state is shared between
// paths, and any increment can be regenerated on its own.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "perfowave/geometry.hpp"

namespace perfowave {

/// Philox4x32-10 counter-based bit generator.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Standard normal variate for a 4-word counter under a 64-bit key.
double counter_normal(std::uint64_t key, std::array<std::uint32_t, 4> counter);
/// Uniform variate in (0, 1).
double counter_uniform(std::uint64_t key, std::array<std::uint32_t, 4> counter);

struct CovarianceSpec {
  int modes = 16;
  double c = 0.5;
  double gamma = 2.0;
  std::vector<double> explicit_alphas;  ///< overrides the power law when non-empty

  static CovarianceSpec power_law(int modes, double c, double gamma);
  static CovarianceSpec from_list(std::vector<double> alphas);
  static CovarianceSpec zero(int modes = 1);

  int mode_count() const;
  /// Eigenvalues alpha_1 .. alpha_M.
  Eigen::VectorXd alphas() const;
  /// Throws ConfigError(field_prefix) on negative eigenvalues or gamma <= 1.
  void validate(const std::string& field_prefix) const;
};

/// sum_{i<=M} alpha_i.
double trace(const CovarianceSpec& spec);

/// The first `count` L2(D)-normalised Dirichlet eigenfunctions of the box,
/// ordered by Laplacian eigenvalue (ties broken lexicographically).
std::vector<std::array<int, 3>> sine_mode_indices(const Box& domain, int count);

/// Basis values: row = grid node, column = mode.
Eigen::MatrixXd sine_basis_on_grid(const StructuredGrid& grid, int count);

/// Evaluates one basis function at a point.
double sine_basis_value(const Box& domain, const std::array<int, 3>& mode, const Eigen::VectorXd& x);

struct StreamId {
  std::uint32_t path = 0;
  std::uint32_t process = 1;  ///< 1 = W1, 2 = W2
};

class WienerSampler {
public:
  WienerSampler(CovarianceSpec spec, std::uint64_t seed, StreamId stream);

  const CovarianceSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  StreamId stream() const { return stream_; }
  std::uint32_t step() const { return step_; }
  void reset(std::uint32_t step = 0) { step_ = step; }

  /// Standard normals xi_i for the given step (does not advance).
  Eigen::VectorXd standard_normals(std::uint32_t step) const;
  /// sqrt(alpha_i * dt) * xi_i for the current step, then advances the step.
  Eigen::VectorXd next_coefficients(double dt);

private:
  CovarianceSpec spec_;
  Eigen::VectorXd sqrt_alpha_;
  std::uint64_t seed_;
  StreamId stream_;
  std::uint32_t step_ = 0;
};

/// One increment W(t + dt) - W(t) at every grid node; advances the sampler.
Eigen::VectorXd sample_increment(WienerSampler& sampler, double dt, const StructuredGrid& grid);

/// Copies a grid field to the fluid nodes (fluid numbering).
Eigen::VectorXd restrict_to_fluid(const Eigen::VectorXd& field, const StructuredGrid& grid);
/// Copies a grid field to the boundary degrees of freedom.
Eigen::VectorXd restrict_to_boundary(const Eigen::VectorXd& field, const BoundaryDofMap& boundary);

}  // namespace perfowave
