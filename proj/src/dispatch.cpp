#include "perfowave/dispatch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "perfowave/errors.hpp"
#include "perfowave/statistics.hpp"

#ifndef PERFOWAVE_VERSION
#define PERFOWAVE_VERSION "unknown"
#endif

namespace perfowave {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format_eps(double eps) {
  std::ostringstream os;
  os << std::setprecision(10) << eps;
  return os.str();
}

Json grid_metadata(const StructuredGrid& grid) {
  const auto& lat = grid.lattice();
  Json j;
  j["dim"] = grid.dim();
  j["nodes"] = std::vector<int>(lat.nodes.begin(), lat.nodes.begin() + grid.dim());
  j["h"] = lat.h;
  j["lower"] = std::vector<double>(grid.domain().lower.data(), grid.domain().lower.data() + grid.dim());
  j["upper"] = std::vector<double>(grid.domain().upper.data(), grid.domain().upper.data() + grid.dim());
  j["numbering"] = "lexicographic, axis 0 fastest";
  return j;
}

// Shared state of one dispatch call.
struct Run {
  const CliOptions& options;
  std::ostream& log;
  std::filesystem::path dir;
  std::string main_file;
  std::vector<std::string> files;
  RunManifest manifest;
  std::string stage = "config";

  void stage_done(const std::string& name, Clock::time_point t0) {
    manifest.stage_seconds.emplace_back(name, seconds_since(t0));
  }
};

EffectiveTensor obtain_tensor(Run& run, const RunConfig& config) {
  if (run.options.tensor) {
    run.stage = "tensor";
    return tensor_from_report(read_json(*run.options.tensor));
  }
  run.stage = "cell";
  const auto t0 = Clock::now();
  const Json report = cell_report(config, TensorVariant::GradientForm);
  write_json(run.dir / "A_star.json", report);
  run.files.push_back("A_star.json");
  run.stage_done("cell", t0);
  return tensor_from_report(report);
}

void run_cell(Run& run, const RunConfig& config) {
  run.stage = "cell";
  const auto t0 = Clock::now();
  const auto variant = run.options.variant.value_or(config.cell_solver.variant);
  write_json(run.dir / run.main_file, cell_report(config, variant));
  run.files.push_back(run.main_file);
  run.stage_done("cell", t0);
}

void run_micro_command(Run& run, const RunConfig& config) {
  run.stage = "geometry";
  auto t0 = Clock::now();
  auto domain = std::make_shared<const PerforatedDomain>(
      build_perforated_domain(config.domain, config.eps, config.cell, config.h));
  const MicroProblem problem = make_micro_problem(domain, config.noise1, config.noise2);
  const auto& grid = problem.grid();
  const auto smallness = check_smallness({config.r, config.eps}, problem);
  if (!smallness.satisfied) {
    run.manifest.warnings.push_back("pseudo.r = " + std::to_string(config.r) +
                                    " violates the smallness condition (estimated trace constant^2 = " +
                                    std::to_string(smallness.trace_constant_sq) + ")");
  }
  run.stage_done("geometry", t0);

  run.stage = "micro";
  t0 = Clock::now();
  const Eigen::VectorXd u0 = first_mode_field(grid, config.initial.u_amplitude);
  const Eigen::VectorXd v0 = first_mode_field(grid, config.initial.v_amplitude);
  MicroState state = zero_micro_state(problem);
  state.u = restrict_to_fluid(u0, grid);
  state.v = restrict_to_fluid(v0, grid);
  state.delta.setConstant(config.initial.delta0);
  state.theta.setConstant(config.initial.theta0);

  const auto& cfg = config.stepper;
  const std::size_t n_steps = cfg.steps();
  MicroIntegrator integrator(problem, cfg);
  WienerSampler w1(config.noise1, config.seed, {0, 1});
  WienerSampler w2(config.noise2, config.seed, {0, 2});

  CsvWriter csv(run.dir / "trajectory.csv",
                {"t", "energy", "pseudo_energy", "u2", "grad_u2", "v2", "delta2", "theta2", "state_norm2"});
  run.files.push_back("trajectory.csv");
  auto write_row = [&](const MicroState& s) {
    const auto n = micro_norms(s, problem);
    csv.row({s.t, pseudo_energy(s, 0.0, config.eps, problem),
             pseudo_energy(pseudo_transform(s, config.r), config.r, config.eps, problem), n.u2, n.grad_u2, n.v2,
             n.delta2, n.theta2, squared_state_norm(s, problem)});
  };
  auto write_snapshot_at = [&](const MicroState& s, std::size_t step) {
    std::ostringstream name;
    name << "state_" << std::setw(4) << std::setfill('0') << step << ".bin";
    Eigen::VectorXd field(2 * grid.node_count());
    field << zero_extend(s.u, grid), zero_extend(s.v, grid);
    Json meta = grid_metadata(grid);
    meta["fields"] = {"u", "v"};
    meta["t"] = s.t;
    meta["step"] = step;
    write_snapshot(run.dir / name.str(), field, meta);
    run.files.push_back(name.str());
    run.files.push_back(name.str() + ".json");
  };

  std::unique_ptr<NoiseLogWriter> noise_log;
  if (cfg.record_noise) {
    Json header;
    header["fluid_count"] = grid.fluid_count();
    header["dof_count"] = problem.boundary().size();
    header["dt"] = cfg.dt;
    header["steps"] = n_steps;
    header["seed"] = config.seed;
    header["streams"] = {{"W1", {{"path", 0}, {"process", 1}}}, {"W2", {{"path", 0}, {"process", 2}}}};
    header["dtype"] = "float64";
    header["byte_order"] = "little";
    noise_log = std::make_unique<NoiseLogWriter>(run.dir / "noise.log", header);
    run.files.push_back("noise.log");
  }

  write_row(state);
  if (config.snapshot_stride > 0) write_snapshot_at(state, 0);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    NoiseIncrement inc;
    state = integrator.step(state, &w1, &w2, noise_log ? &inc : nullptr);
    if (noise_log) noise_log->append(inc.dw1, inc.dw2);
    const bool row = cfg.record_stride == 0 ? n == n_steps : (n % cfg.record_stride == 0 || n == n_steps);
    if (row) write_row(state);
    if (config.snapshot_stride > 0 && (n % config.snapshot_stride == 0 || n == n_steps)) write_snapshot_at(state, n);
  }
  run.stage_done("micro", t0);
  run.log << "micro: " << n_steps << " steps, " << integrator.total_iterations() << " CG iterations\n";
}

void run_macro_command(Run& run, const RunConfig& config) {
  const EffectiveTensor tensor = obtain_tensor(run, config);
  run.stage = "macro";
  const auto t0 = Clock::now();
  const MacroProblem problem = make_macro_problem(config.domain, config.h, tensor, tensor.porosity, config.noise1);
  const auto& grid = problem.grid();
  MacroState state = initialize_macro(first_mode_field(grid, config.initial.u_amplitude),
                                      first_mode_field(grid, config.initial.v_amplitude), tensor.porosity,
                                      config.macro_scaling);
  const auto& cfg = config.stepper;
  const std::size_t n_steps = cfg.steps();
  MacroIntegrator integrator(problem, cfg);
  WienerSampler w1(config.noise1, config.seed, {0, 1});

  CsvWriter csv(run.dir / "trajectory.csv", {"t", "energy", "V2", "Vt2"});
  run.files.push_back("trajectory.csv");
  const Eigen::VectorXd& w = grid.node_weights();
  auto write_row = [&](const MacroState& s) {
    csv.row({s.t, macro_energy(s, problem), (w.array() * s.V.array().square()).sum(),
             (w.array() * s.Vt.array().square()).sum()});
  };
  auto write_snapshot_at = [&](const MacroState& s, std::size_t step) {
    std::ostringstream name;
    name << "state_" << std::setw(4) << std::setfill('0') << step << ".bin";
    Eigen::VectorXd field(2 * grid.node_count());
    field << s.V, s.Vt;
    Json meta = grid_metadata(grid);
    meta["fields"] = {"V", "V_t"};
    meta["t"] = s.t;
    meta["step"] = step;
    write_snapshot(run.dir / name.str(), field, meta);
    run.files.push_back(name.str());
    run.files.push_back(name.str() + ".json");
  };
  write_row(state);
  if (config.snapshot_stride > 0) write_snapshot_at(state, 0);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    state = integrator.step(state, &w1);
    const bool row = cfg.record_stride == 0 ? n == n_steps : (n % cfg.record_stride == 0 || n == n_steps);
    if (row) write_row(state);
    if (config.snapshot_stride > 0 && (n % config.snapshot_stride == 0 || n == n_steps)) write_snapshot_at(state, n);
  }
  run.stage_done("macro", t0);
}

void run_energy_check(Run& run, const RunConfig& config) {
  run.stage = "energy-check";
  const auto t0 = Clock::now();
  const auto result = energy_check(config, resolve_threads(run.options.threads));
  write_json(run.dir / run.main_file, to_json(result));
  run.files.push_back(run.main_file);
  run.stage_done("energy-check", t0);
  run.log << "energy-check: max |residual| at finest dt = " << result.max_residual.back()
          << (result.deterministic_pass ? " (pass)" : " (FAIL)") << "\n";
}

void run_converge(Run& run, RunConfig config) {
  const EffectiveTensor tensor = obtain_tensor(run, config);
  if (tensor.variant != TensorVariant::GradientForm) {
    throw ValidationError("the convergence study needs a gradient-form tensor");
  }
  run.stage = "converge";
  const auto t0 = Clock::now();
  auto spec = config.ensemble;
  spec.threads = resolve_threads(run.options.threads);
  StudyTiming timing;
  const DistanceReport report = run_study(spec, config.cell, tensor, &timing);
  write_json(run.dir / run.main_file, report_to_json(report, spec));
  run.files.push_back(run.main_file);
  for (std::size_t k = 0; k < report.levels.size(); ++k) {
    const std::string name = "functionals_eps_" + format_eps(report.levels[k].eps) + ".csv";
    write_functionals_csv(run.dir / name, report.levels[k]);
    run.files.push_back(name);
    run.manifest.stage_seconds.emplace_back("converge eps=" + format_eps(report.levels[k].eps),
                                            timing.level_seconds[k]);
  }
  run.stage_done("converge", t0);
  if (!report.valid) run.manifest.warnings.push_back("more than 5% of the paths were excluded; study invalid");
}

std::string default_main_file(const std::string& command) {
  if (command == "cell") return "A_star.json";
  if (command == "energy-check") return "energy_check.json";
  if (command == "converge") return "report.json";
  return "summary.json";
}

}  // namespace

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PERFOWAVE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Eigen::VectorXd first_mode_field(const StructuredGrid& grid, double amplitude) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(grid.node_count());
  if (amplitude == 0.0) return f;
  const auto& box = grid.domain();
  for (std::int64_t id = 0; id < grid.node_count(); ++id) {
    if (grid.node_class(id) == NodeClass::OuterBoundary) continue;
    const Eigen::VectorXd x = grid.coordinates(id);
    double v = amplitude;
    for (int a = 0; a < grid.dim(); ++a) v *= std::sin(M_PI * (x[a] - box.lower[a]) / (box.upper[a] - box.lower[a]));
    f[id] = v;
  }
  return f;
}

Json cell_report(const RunConfig& config, TensorVariant selected) {
  CellSolveOptions opt;
  opt.cg.relative_tolerance = config.cell_solver.tolerance;
  const auto& spacings = config.cell_solver.spacings;
  std::vector<Eigen::MatrixXd> grad, lit;
  Json grad_json = Json::array(), lit_json = Json::array(), solver = Json::array();
  for (double hc : spacings) {
    const auto sol = solve_cell_problem(config.cell, hc, opt);
    grad.push_back(effective_tensor(sol, TensorVariant::GradientForm).matrix);
    lit.push_back(effective_tensor(sol, TensorVariant::PaperLiteral).matrix);
    grad_json.push_back(matrix_to_json(grad.back()));
    lit_json.push_back(matrix_to_json(lit.back()));
    solver.push_back({{"h_c", hc},
                      {"iterations", sol.iterations},
                      {"relative_residual", sol.solver_residual},
                      {"harmonic_residual", sol.harmonic_residual}});
  }
  Json j;
  j["format_version"] = kFormatVersion;
  j["dim"] = config.cell.dim;
  j["porosity"] = config.cell.porosity();
  j["h_c"] = spacings;
  j["gradient_form"] = {{"tensors", grad_json}};
  j["paper_literal"] = {{"tensors", lit_json}};
  Eigen::MatrixXd best_grad = grad.back();
  if (spacings.size() >= 3) {
    const auto study = richardson_study(spacings, grad, config.cell.porosity());
    j["gradient_form"]["extrapolated"] = matrix_to_json(study.extrapolated);
    j["gradient_form"]["observed_order"] =
        std::isfinite(study.observed_order) ? Json(study.observed_order) : Json("exact");
    if (study.extrapolated.allFinite()) best_grad = study.extrapolated;
  }
  j["solver"] = solver;
  j["variant"] = to_string(selected);
  j["tensor"] = matrix_to_json(selected == TensorVariant::GradientForm ? best_grad : lit.back());
  return j;
}

EffectiveTensor tensor_from_report(const Json& report) {
  EffectiveTensor t;
  try {
    t.matrix = matrix_from_json(report.at("tensor"));
    t.porosity = report.at("porosity").get<double>();
    t.variant = tensor_variant_from_string(report.value("variant", std::string("gradient-form")));
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed tensor report: ") + e.what());
  }
  return t;
}

EnergyCheckResult energy_check(const RunConfig& config, std::size_t threads) {
  EnergyCheckResult res;
  res.threshold = config.energy_check.threshold;
  auto domain = std::make_shared<const PerforatedDomain>(
      build_perforated_domain(config.domain, config.eps, config.cell, config.h));
  const MicroProblem problem = make_micro_problem(domain, config.noise1, config.noise2);
  // the deterministic identity drops the trace terms too, not just the samplers
  const MicroProblem quiet = make_micro_problem(domain, CovarianceSpec::zero(), CovarianceSpec::zero());
  const auto& grid = problem.grid();
  MicroState initial = zero_micro_state(problem);
  initial.u = restrict_to_fluid(first_mode_field(grid, config.initial.u_amplitude), grid);
  initial.v = restrict_to_fluid(first_mode_field(grid, config.initial.v_amplitude), grid);
  initial.delta.setConstant(config.initial.delta0);
  initial.theta.setConstant(config.initial.theta0);

  for (double dt : config.energy_check.dt_list) {
    MicroStepperConfig cfg = config.stepper;
    cfg.dt = dt;
    cfg.record_stride = 1;
    cfg.record_noise = true;
    const auto traj = run_micro(quiet, cfg, initial, nullptr, nullptr);
    const auto rep = energy_identity_residual(traj, config.r, config.eps, quiet);
    double worst = 0.0;
    for (double r : rep.pathwise_residual) worst = std::max(worst, std::abs(r));
    res.dt.push_back(dt);
    res.residual_T.push_back(std::abs(rep.pathwise_residual.back()));
    res.max_residual.push_back(worst);
  }
  for (std::size_t k = 0; k + 1 < res.dt.size(); ++k) {
    res.orders.push_back(std::log(res.residual_T[k] / res.residual_T[k + 1]) / std::log(res.dt[k] / res.dt[k + 1]));
  }
  res.deterministic_pass = !res.orders.empty() && res.max_residual.back() <= res.threshold;
  for (double p : res.orders) res.deterministic_pass = res.deterministic_pass && p >= 1.0;

  res.paths = config.energy_check.paths;
  if (res.paths > 0) {
    MicroStepperConfig cfg = config.stepper;
    cfg.record_stride = 1;
    cfg.record_noise = true;
    std::vector<std::vector<double>> series(res.paths);
    std::vector<double> times;
    parallel_for(res.paths, threads, [&](std::size_t k) {
      WienerSampler w1(config.noise1, config.seed, {static_cast<std::uint32_t>(k), 1});
      WienerSampler w2(config.noise2, config.seed, {static_cast<std::uint32_t>(k), 2});
      const auto traj = run_micro(problem, cfg, initial, &w1, &w2);
      series[k] = energy_identity_residual(traj, config.r, config.eps, problem).expected_residual;
    });
    const std::size_t n_times = series.front().size();
    const std::size_t stride = std::max<std::size_t>(1, (n_times - 1) / 16);
    for (std::size_t n = 0; n < n_times; n += stride) {
      std::vector<double> x;
      for (const auto& s : series) x.push_back(s[n]);
      const double mean = sample_mean(x);
      const double se = std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
      res.times.push_back(static_cast<double>(n) * cfg.dt);
      res.mean_residual.push_back(mean);
      res.standard_error.push_back(se);
      if (std::abs(mean) > 3.0 * se + 1e-12) res.stochastic_pass = false;
    }
  }
  return res;
}

Json to_json(const EnergyCheckResult& r) {
  Json j;
  j["dt"] = r.dt;
  j["residual_T"] = r.residual_T;
  j["max_residual"] = r.max_residual;
  j["observed_orders"] = r.orders;
  j["threshold"] = r.threshold;
  j["deterministic_pass"] = r.deterministic_pass;
  if (r.paths > 0) {
    j["stochastic"] = {{"paths", r.paths},
                       {"times", r.times},
                       {"mean_expected_residual", r.mean_residual},
                       {"standard_error", r.standard_error},
                       {"pass", r.stochastic_pass}};
  }
  return j;
}

int dispatch(const CliOptions& options, std::ostream& log) {
  static const std::vector<std::string> commands{"cell", "micro", "macro", "energy-check", "converge"};
  if (std::find(commands.begin(), commands.end(), options.command) == commands.end()) {
    log << "unknown subcommand '" << options.command << "'\n";
    return kExitUsage;
  }
  Run run{options, log, {}, {}, {}, {}};
  if (options.out.extension() == ".json") {
    run.dir = options.out.has_parent_path() ? options.out.parent_path() : std::filesystem::path(".");
    run.main_file = options.out.filename().string();
  } else {
    run.dir = options.out;
    run.main_file = default_main_file(options.command);
  }
  std::filesystem::create_directories(run.dir);
  run.manifest.command = options.command;
  run.manifest.version = PERFOWAVE_VERSION;
  run.manifest.started = utc_timestamp();

  int status = kExitOk;
  try {
    const auto t0 = Clock::now();
    RunConfig config = parse_config(options.config);
    run.manifest.config_hash = sha256_hex(config.source_text);
    if (options.seed) {
      config.seed = *options.seed;
      config.ensemble.seed = *options.seed;
    }
    if (options.eps_list) {
      config.ensemble.eps_list = *options.eps_list;
      validate_config(config);
    }
    run.manifest.seed = config.seed;
    run.manifest.warnings = config.warnings;
    {
      std::ofstream copy(run.dir / "config.toml", std::ios::binary);
      copy << config.source_text;
    }
    run.files.push_back("config.toml");
    run.stage_done("config", t0);

    if (options.command == "cell") run_cell(run, config);
    else if (options.command == "micro") run_micro_command(run, config);
    else if (options.command == "macro") run_macro_command(run, config);
    else if (options.command == "energy-check") run_energy_check(run, config);
    else run_converge(run, config);
  } catch (const std::exception& e) {
    status = kExitFailure;
    Json err;
    err["stage"] = run.stage;
    err["message"] = e.what();
    if (const auto* ce = dynamic_cast<const ConfigErrors*>(&e)) {
      err["type"] = "config";
      Json list = Json::array();
      for (const auto& fe : ce->errors()) list.push_back({{"field", fe.field}, {"message", fe.message}});
      err["errors"] = list;
    } else if (const auto* c1 = dynamic_cast<const ConfigError*>(&e)) {
      err["type"] = "config";
      err["errors"] = Json::array({{{"field", c1->field()}, {"message", e.what()}}});
    } else if (dynamic_cast<const ValidationError*>(&e)) {
      err["type"] = "validation";
    } else if (const auto* se = dynamic_cast<const SolverError*>(&e)) {
      err["type"] = "solver";
      err["iterations"] = se->iterations();
      err["residual"] = se->residual();
    } else if (const auto* be = dynamic_cast<const BlowUpError*>(&e)) {
      err["type"] = "blow-up";
      err["step"] = be->step();
    } else {
      err["type"] = "runtime";
    }
    write_json(run.dir / "error.json", err);
    run.files.push_back("error.json");
    log << "error [" << run.stage << "]: " << e.what() << "\n";
    run.manifest.status = "failed";
  }
  run.manifest.finished = utc_timestamp();
  if (run.manifest.config_hash.empty()) {
    try {
      run.manifest.config_hash = sha256_file(options.config);
    } catch (const std::exception&) {
    }
  }
  write_manifest(run.dir, run.manifest, run.files);
  return status;
}

}  // namespace perfowave
