#include "perfowave/convergence_lab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "perfowave/errors.hpp"
#include "perfowave/macro_solver.hpp"
#include "perfowave/micro_solver.hpp"
#include "perfowave/statistics.hpp"

namespace perfowave {
namespace {

constexpr std::uint32_t kProcW1 = 1;
constexpr std::uint32_t kProcW2 = 2;
constexpr std::uint32_t kProcMacroIndependent = 3;
constexpr std::uint32_t kProcNullMicro = 4;
constexpr std::uint32_t kProcNullMacroA = 5;
constexpr std::uint32_t kProcNullMacroB = 6;

// Per-node quadrature data shared by all paths of one level.
struct Probe {
  Eigen::VectorXd weight;   ///< L2(D) weight per grid node
  Eigen::VectorXd g;        ///< probe function per grid node
  std::vector<int> block;   ///< mean-field block of each node
  int blocks = 0;
  double block_volume = 0.0;
  std::vector<std::size_t> output_steps;
};

Probe make_probe(const StructuredGrid& grid, const EnsembleSpec& spec, std::size_t n_steps) {
  Probe p;
  const auto& box = grid.domain();
  const int d = grid.dim();
  p.weight = grid.node_weights();
  p.g.resize(grid.node_count());
  p.block.resize(static_cast<std::size_t>(grid.node_count()));
  const int nb = spec.mean_field_blocks;
  p.blocks = 1;
  for (int a = 0; a < d; ++a) p.blocks *= nb;
  p.block_volume = box.volume() / p.blocks;
  for (std::int64_t id = 0; id < grid.node_count(); ++id) {
    const Eigen::VectorXd x = grid.coordinates(id);
    double g = 1.0;
    int b = 0;
    for (int a = d - 1; a >= 0; --a) {
      const double s = (x[a] - box.lower[a]) / (box.upper[a] - box.lower[a]);
      g *= std::sin(M_PI * s);
      b = b * nb + std::clamp(static_cast<int>(std::floor(s * nb)), 0, nb - 1);
    }
    p.g[id] = g;
    p.block[static_cast<std::size_t>(id)] = b;
  }
  const int k_out = std::max(1, spec.mean_field_outputs);
  for (int k = 0; k <= k_out; ++k) {
    p.output_steps.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(n_steps) * k / k_out)));
  }
  return p;
}

struct PathOutput {
  bool ok = false;
  std::array<double, kFunctionalCount> J{};
  std::vector<double> mean_field;  ///< (outputs) x (blocks)
};

// Accumulates the functionals from one field snapshot per time step.
class FunctionalAccumulator {
public:
  FunctionalAccumulator(const Probe& probe, double dt) : probe_(probe), dt_(dt) {}

  template <typename ForEachNode>
  void observe(std::size_t step, bool last, ForEachNode&& for_each) {
    double q = 0.0, p = 0.0;
    const bool sample = next_output_ < probe_.output_steps.size() && probe_.output_steps[next_output_] == step;
    std::vector<double> blocks;
    if (sample) blocks.assign(static_cast<std::size_t>(probe_.blocks), 0.0);
    for_each([&](std::int64_t node, double value) {
      const double w = probe_.weight[node];
      q += w * value * value;
      p += w * value * probe_.g[node];
      if (sample) blocks[static_cast<std::size_t>(probe_.block[static_cast<std::size_t>(node)])] += w * value;
    });
    const double wt = (step == 0 || last) ? 0.5 * dt_ : dt_;
    out.J[0] += wt * q;
    out.J[2] += wt * p;
    if (last) out.J[1] = p;
    if (sample) {
      for (auto& b : blocks) b /= probe_.block_volume;
      out.mean_field.insert(out.mean_field.end(), blocks.begin(), blocks.end());
      ++next_output_;
    }
  }

  PathOutput out;

private:
  const Probe& probe_;
  double dt_;
  std::size_t next_output_ = 0;
};

PathOutput run_micro_path(const MicroProblem& problem, const MicroStepperConfig& config, const Probe& probe,
                          std::uint64_t seed, std::uint32_t path, std::uint32_t proc1, bool with_w2) {
  const std::size_t n_steps = config.steps();
  MicroIntegrator integrator(problem, config);
  WienerSampler w1(problem.noise1, seed, {path, proc1});
  WienerSampler w2(problem.noise2, seed, {path, kProcW2});
  MicroState state = zero_micro_state(problem);
  FunctionalAccumulator acc(probe, config.dt);
  const auto& nodes = problem.grid().fluid_nodes();
  auto visit = [&](auto&& f) {
    for (std::size_t i = 0; i < nodes.size(); ++i) f(nodes[i], state.u[static_cast<Eigen::Index>(i)]);
  };
  acc.observe(0, false, visit);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    state = integrator.step(state, &w1, with_w2 ? &w2 : nullptr);
    acc.observe(n, n == n_steps, visit);
  }
  acc.out.ok = true;
  return std::move(acc.out);
}

PathOutput run_macro_path(const MacroProblem& problem, const MicroStepperConfig& config, const Probe& probe,
                          std::uint64_t seed, std::uint32_t path, std::uint32_t proc1) {
  const std::size_t n_steps = config.steps();
  MacroIntegrator integrator(problem, config);
  WienerSampler w1(problem.noise1, seed, {path, proc1});
  MacroState state = zero_macro_state(problem);
  FunctionalAccumulator acc(probe, config.dt);
  auto visit = [&](auto&& f) {
    for (Eigen::Index i = 0; i < state.V.size(); ++i) f(i, state.V[i]);
  };
  acc.observe(0, false, visit);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    state = integrator.step(state, &w1);
    acc.observe(n, n == n_steps, visit);
  }
  acc.out.ok = true;
  return std::move(acc.out);
}

std::vector<FunctionalSample> collect(const std::vector<PathOutput>& out, std::size_t& excluded) {
  std::vector<FunctionalSample> samples;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!out[k].ok) {
      ++excluded;
      continue;
    }
    samples.push_back({k, out[k].J});
  }
  return samples;
}

std::vector<double> column(const std::vector<FunctionalSample>& s, int j) {
  std::vector<double> x;
  x.reserve(s.size());
  for (const auto& f : s) x.push_back(f.J[static_cast<std::size_t>(j)]);
  return x;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xC2B2AE3D27D4EB4Full);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

FunctionalDistance compare(const std::vector<double>& a, const std::vector<double>& b, int replicates,
                           std::uint64_t seed) {
  FunctionalDistance d;
  if (a.empty() || b.empty()) {
    d.energy = d.energy_se = d.ks = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  d.energy = energy_distance(a, b);
  d.ks = ks_statistic(a, b);
  d.energy_se = bootstrap_standard_error(
      a, b, [](std::span<const double> x, std::span<const double> y) { return energy_distance(x, y); },
      replicates, seed);
  return d;
}

// L2((0,T) x D) gap of the block-projected ensemble means and the sampling
// noise floor of that estimate.
std::pair<double, double> mean_field_gap(const std::vector<PathOutput>& a, const std::vector<PathOutput>& b,
                                         const Probe& probe, double T) {
  const std::size_t n_out = probe.output_steps.size();
  const std::size_t nb = static_cast<std::size_t>(probe.blocks);
  auto moments = [&](const std::vector<PathOutput>& paths, std::vector<double>& mean, std::vector<double>& var_of_mean) {
    mean.assign(n_out * nb, 0.0);
    var_of_mean.assign(n_out * nb, 0.0);
    std::size_t n = 0;
    for (const auto& p : paths) {
      if (!p.ok) continue;
      ++n;
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p.mean_field[i];
    }
    if (n == 0) return;
    for (auto& m : mean) m /= static_cast<double>(n);
    for (const auto& p : paths) {
      if (!p.ok) continue;
      for (std::size_t i = 0; i < mean.size(); ++i) var_of_mean[i] += (p.mean_field[i] - mean[i]) * (p.mean_field[i] - mean[i]);
    }
    const double denom = n > 1 ? static_cast<double>(n - 1) * static_cast<double>(n) : 1.0;
    for (auto& v : var_of_mean) v /= denom;
  };
  std::vector<double> ma, va, mb, vb;
  moments(a, ma, va);
  moments(b, mb, vb);
  double gap = 0.0, floor = 0.0;
  const double dt_out = T / static_cast<double>(n_out - 1);
  for (std::size_t t = 0; t < n_out; ++t) {
    const double wt = (t == 0 || t + 1 == n_out) ? 0.5 * dt_out : dt_out;
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t i = t * nb + k;
      gap += wt * probe.block_volume * (ma[i] - mb[i]) * (ma[i] - mb[i]);
      floor += wt * probe.block_volume * (va[i] + vb[i]);
    }
  }
  return {std::sqrt(gap), std::sqrt(floor)};
}

}  // namespace

const std::array<std::string, kFunctionalCount>& functional_names() {
  static const std::array<std::string, kFunctionalCount> names{"J1", "J2", "J3"};
  return names;
}

void EnsembleSpec::validate() const {
  if (eps_list.empty()) throw ConfigError("ensemble.eps_list", "must not be empty");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0 && eps_list[i] < 1.0)) throw ConfigError("ensemble.eps_list", "values must lie in (0, 1)");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ConfigError("ensemble.eps_list", "must be strictly decreasing");
  }
  if (paths < 30) throw ConfigError("ensemble.paths", "at least 30 paths are needed for distance estimation");
  if (!(T > 0.0)) throw ConfigError("ensemble.T", "must be positive");
  if (!(h_over_eps > 0.0)) throw ConfigError("ensemble.h_over_eps", "must be positive");
  if (!(dt_over_eps > 0.0)) throw ConfigError("ensemble.dt_over_eps", "must be positive");
  if (bootstrap_replicates < 2) throw ConfigError("ensemble.bootstrap", "need at least two replicates");
  if (mean_field_blocks < 1) throw ConfigError("ensemble.mean_field_blocks", "must be positive");
  if (mean_field_outputs < 1) throw ConfigError("ensemble.mean_field_outputs", "must be positive");
}

bool trend_nonincreasing(const std::vector<double>& d, const std::vector<double>& se) {
  for (std::size_t k = 0; k + 1 < d.size(); ++k) {
    if (!std::isfinite(d[k]) || !std::isfinite(d[k + 1])) return false;
    if (d[k + 1] > d[k] + 2.0 * std::sqrt(se[k] * se[k] + se[k + 1] * se[k + 1])) return false;
  }
  return true;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

DistanceReport run_study(const EnsembleSpec& spec, const UnitCellSpec& cell, const EffectiveTensor& tensor,
                         StudyTiming* timing) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const double nu = cell.porosity();
  validate_tensor(tensor, nu);
  const int d = cell.dim;

  DistanceReport report;
  report.tensor = tensor.matrix;
  report.nu = nu;
  const auto identity = EffectiveTensor::identity(d);
  const std::size_t M = spec.paths;

  for (std::size_t level = 0; level < spec.eps_list.size(); ++level) {
    const auto level_start = std::chrono::steady_clock::now();
    const double eps = spec.eps_list[level];
    LevelReport lr;
    lr.eps = eps;
    lr.h = eps * spec.h_over_eps;
    lr.dt = eps * spec.dt_over_eps;

    MicroStepperConfig config;
    config.dt = lr.dt;
    config.T = spec.T;
    config.flags = spec.flags;
    config.cg = spec.cg;
    config.record_noise = false;
    const std::size_t n_steps = config.steps();

    auto micro_domain = std::make_shared<const PerforatedDomain>(build_perforated_domain(spec.domain, eps, cell, lr.h));
    lr.holes = micro_domain->spec.holes.size();
    const MicroProblem micro = make_micro_problem(micro_domain, spec.noise1, spec.noise2);
    const MacroProblem macro = make_macro_problem(spec.domain, lr.h, tensor, nu, spec.noise1);
    const Probe probe = make_probe(micro.grid(), spec, n_steps);

    std::shared_ptr<const MicroProblem> null_micro;
    std::shared_ptr<const MacroProblem> null_macro;
    if (spec.null_calibration) {
      auto free_domain = std::make_shared<const PerforatedDomain>(build_box_domain(spec.domain, lr.h));
      null_micro = std::make_shared<const MicroProblem>(make_micro_problem(free_domain, spec.noise1, spec.noise2));
      null_macro = std::make_shared<const MacroProblem>(make_macro_problem(spec.domain, lr.h, identity, 1.0, spec.noise1));
    }

    const std::size_t ensembles = spec.null_calibration ? 5 : 2;
    std::vector<std::vector<PathOutput>> out(ensembles, std::vector<PathOutput>(M));
    const std::uint32_t macro_proc = spec.common_random_numbers ? kProcW1 : kProcMacroIndependent;
    parallel_for(ensembles * M, spec.threads, [&](std::size_t task) {
      const std::size_t e = task / M;
      const auto k = static_cast<std::uint32_t>(task % M);
      try {
        switch (e) {
          case 0: out[e][k] = run_micro_path(micro, config, probe, spec.seed, k, kProcW1, true); break;
          case 1: out[e][k] = run_macro_path(macro, config, probe, spec.seed, k, macro_proc); break;
          case 2: out[e][k] = run_micro_path(*null_micro, config, probe, spec.seed, k, kProcNullMicro, false); break;
          case 3: out[e][k] = run_macro_path(*null_macro, config, probe, spec.seed, k, kProcNullMacroA); break;
          default: out[e][k] = run_macro_path(*null_macro, config, probe, spec.seed, k, kProcNullMacroB); break;
        }
      } catch (const BlowUpError&) {
        out[e][k] = PathOutput{};
      } catch (const SolverError&) {
        out[e][k] = PathOutput{};
      }
    });

    lr.micro = collect(out[0], lr.excluded_micro);
    lr.macro = collect(out[1], lr.excluded_macro);
    report.total_paths += ensembles * M;
    report.excluded_paths += lr.excluded_micro + lr.excluded_macro;

    for (int j = 0; j < kFunctionalCount; ++j) {
      lr.distance[static_cast<std::size_t>(j)] =
          compare(column(lr.micro, j), column(lr.macro, j), spec.bootstrap_replicates, mix_seed(spec.seed, level, 10 + j));
    }
    std::tie(lr.mean_field_gap, lr.mean_field_noise_floor) = mean_field_gap(out[0], out[1], probe, spec.T);

    if (spec.null_calibration) {
      lr.has_null = true;
      std::size_t ex_micro = 0, ex_a = 0, ex_b = 0;
      const auto free_micro = collect(out[2], ex_micro);
      const auto macro_a = collect(out[3], ex_a);
      const auto macro_b = collect(out[4], ex_b);
      report.excluded_paths += ex_micro + ex_a + ex_b;
      for (int j = 0; j < kFunctionalCount; ++j) {
        auto& nc = lr.null[static_cast<std::size_t>(j)];
        const auto cross = compare(column(free_micro, j), column(macro_a, j), spec.bootstrap_replicates,
                                   mix_seed(spec.seed, level, 20 + j));
        const auto null = compare(column(macro_b, j), column(macro_a, j), spec.bootstrap_replicates,
                                  mix_seed(spec.seed, level, 30 + j));
        nc.cross = cross.energy;
        nc.cross_se = cross.energy_se;
        nc.null = null.energy;
        nc.null_se = null.energy_se;
        nc.pass = std::isfinite(nc.cross) && std::isfinite(nc.null) &&
                  nc.cross <= nc.null + 2.0 * std::sqrt(nc.cross_se * nc.cross_se + nc.null_se * nc.null_se);
        report.null_ok = report.null_ok && nc.pass;
      }
    }
    report.levels.push_back(std::move(lr));
    if (timing) {
      timing->level_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - level_start).count());
    }
  }

  for (int j = 0; j < kFunctionalCount; ++j) {
    std::vector<double> dist, se;
    for (const auto& lr : report.levels) {
      dist.push_back(lr.distance[static_cast<std::size_t>(j)].energy);
      se.push_back(lr.distance[static_cast<std::size_t>(j)].energy_se);
    }
    report.trend_nonincreasing[static_cast<std::size_t>(j)] = trend_nonincreasing(dist, se);
  }
  report.valid = static_cast<double>(report.excluded_paths) <= 0.05 * static_cast<double>(report.total_paths);
  if (timing) {
    timing->total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return report;
}

}  // namespace perfowave
