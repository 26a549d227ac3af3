#include "perfowave/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "perfowave/errors.hpp"

namespace perfowave {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform in (0, 1) from two 32-bit words.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
  return (static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) + 0.5) * 0x1.0p-53;
}

std::array<std::uint32_t, 2> split_key(std::uint64_t key) {
  return {static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

double counter_uniform(std::uint64_t key, std::array<std::uint32_t, 4> counter) {
  const auto r = philox4x32(counter, split_key(key));
  return to_open_unit(r[0], r[1]);
}

double counter_normal(std::uint64_t key, std::array<std::uint32_t, 4> counter) {
  const auto r = philox4x32(counter, split_key(key));
  const double u1 = to_open_unit(r[0], r[1]);
  const double u2 = to_open_unit(r[2], r[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CovarianceSpec CovarianceSpec::power_law(int modes, double c, double gamma) {
  CovarianceSpec s;
  s.modes = modes;
  s.c = c;
  s.gamma = gamma;
  return s;
}

CovarianceSpec CovarianceSpec::from_list(std::vector<double> alphas) {
  CovarianceSpec s;
  s.modes = static_cast<int>(alphas.size());
  s.explicit_alphas = std::move(alphas);
  return s;
}

CovarianceSpec CovarianceSpec::zero(int modes) { return power_law(modes, 0.0, 2.0); }

int CovarianceSpec::mode_count() const {
  return explicit_alphas.empty() ? modes : static_cast<int>(explicit_alphas.size());
}

Eigen::VectorXd CovarianceSpec::alphas() const {
  if (!explicit_alphas.empty()) {
    return Eigen::Map<const Eigen::VectorXd>(explicit_alphas.data(),
                                             static_cast<Eigen::Index>(explicit_alphas.size()));
  }
  Eigen::VectorXd a(modes);
  for (int i = 0; i < modes; ++i) a[i] = c * std::pow(static_cast<double>(i + 1), -gamma);
  return a;
}

void CovarianceSpec::validate(const std::string& field_prefix) const {
  if (mode_count() < 1) throw ConfigError(field_prefix + ".modes", "at least one mode required");
  if (!explicit_alphas.empty()) {
    for (double a : explicit_alphas) {
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw ConfigError(field_prefix + ".alphas", "eigenvalues must be finite and non-negative");
      }
    }
    return;
  }
  if (!(c >= 0.0)) throw ConfigError(field_prefix + ".c", "eigenvalue scale must be non-negative");
  if (!(gamma > 1.0)) throw ConfigError(field_prefix + ".gamma", "decay exponent must exceed 1");
}

double trace(const CovarianceSpec& spec) {
  double s = 0.0;
  const auto a = spec.alphas();
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

std::vector<std::array<int, 3>> sine_mode_indices(const Box& domain, int count) {
  const int d = domain.dim();
  const Eigen::VectorXd len = domain.extent();
  // Enough candidates: every index up to `count` on each axis.
  std::vector<std::pair<double, std::array<int, 3>>> cand;
  const int kmax = std::max(1, count);
  std::array<int, 3> k{1, 1, 1};
  while (true) {
    double lambda = 0.0;
    for (int a = 0; a < d; ++a) lambda += (k[a] / len[a]) * (k[a] / len[a]);
    cand.emplace_back(lambda, k);
    int a = 0;
    while (a < d && ++k[a] > kmax) {
      k[a] = 1;
      ++a;
    }
    if (a == d) break;
  }
  std::stable_sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first < y.first;
    return x.second < y.second;
  });
  std::vector<std::array<int, 3>> out;
  for (int i = 0; i < count; ++i) out.push_back(cand[static_cast<std::size_t>(i)].second);
  return out;
}

double sine_basis_value(const Box& domain, const std::array<int, 3>& mode, const Eigen::VectorXd& x) {
  double v = 1.0;
  for (int a = 0; a < domain.dim(); ++a) {
    const double len = domain.upper[a] - domain.lower[a];
    v *= std::sqrt(2.0 / len) * std::sin(mode[a] * std::numbers::pi * (x[a] - domain.lower[a]) / len);
  }
  return v;
}

Eigen::MatrixXd sine_basis_on_grid(const StructuredGrid& grid, int count) {
  const auto modes = sine_mode_indices(grid.domain(), count);
  const auto& lat = grid.lattice();
  const int d = lat.dim;
  // Separable: tabulate the 1D factors once per axis.
  std::vector<Eigen::MatrixXd> factor(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    const double len = grid.domain().extent()[a];
    factor[static_cast<std::size_t>(a)].resize(lat.nodes[a], count);
    for (int j = 0; j < lat.nodes[a]; ++j) {
      for (int m = 0; m < count; ++m) {
        factor[static_cast<std::size_t>(a)](j, m) =
            std::sqrt(2.0 / len) *
            std::sin(modes[static_cast<std::size_t>(m)][static_cast<std::size_t>(a)] * std::numbers::pi * j * lat.h / len);
      }
    }
  }
  Eigen::MatrixXd basis(grid.node_count(), count);
  for (std::int64_t id = 0; id < grid.node_count(); ++id) {
    const auto p = lat.node_index(id);
    for (int m = 0; m < count; ++m) {
      double v = 1.0;
      for (int a = 0; a < d; ++a) v *= factor[static_cast<std::size_t>(a)](p[a], m);
      basis(id, m) = v;
    }
  }
  return basis;
}

WienerSampler::WienerSampler(CovarianceSpec spec, std::uint64_t seed, StreamId stream)
    : spec_(std::move(spec)), seed_(seed), stream_(stream) {
  sqrt_alpha_ = spec_.alphas().cwiseMax(0.0).cwiseSqrt();
}

Eigen::VectorXd WienerSampler::standard_normals(std::uint32_t step) const {
  Eigen::VectorXd xi(sqrt_alpha_.size());
  for (Eigen::Index m = 0; m < xi.size(); ++m) {
    xi[m] = counter_normal(seed_, {step, static_cast<std::uint32_t>(m), stream_.path, stream_.process});
  }
  return xi;
}

Eigen::VectorXd WienerSampler::next_coefficients(double dt) {
  Eigen::VectorXd coeff = std::sqrt(dt) * sqrt_alpha_.cwiseProduct(standard_normals(step_));
  ++step_;
  return coeff;
}

Eigen::VectorXd sample_increment(WienerSampler& sampler, double dt, const StructuredGrid& grid) {
  if (!(dt > 0.0)) throw ValidationError("sample_increment: dt must be positive");
  const Eigen::MatrixXd basis = sine_basis_on_grid(grid, sampler.spec().mode_count());
  return basis * sampler.next_coefficients(dt);
}

Eigen::VectorXd restrict_to_fluid(const Eigen::VectorXd& field, const StructuredGrid& grid) {
  if (field.size() != grid.node_count()) throw ValidationError("restrict: shape mismatch");
  Eigen::VectorXd out(grid.fluid_count());
  const auto& nodes = grid.fluid_nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) out[static_cast<Eigen::Index>(i)] = field[nodes[i]];
  return out;
}

Eigen::VectorXd restrict_to_boundary(const Eigen::VectorXd& field, const BoundaryDofMap& boundary) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(boundary.size()));
  for (std::size_t k = 0; k < boundary.size(); ++k) {
    const auto node = boundary.dofs[k].node;
    if (node >= field.size()) throw ValidationError("restrict: shape mismatch");
    out[static_cast<Eigen::Index>(k)] = field[node];
  }
  return out;
}

}  // namespace perfowave
