#include "perfowave/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include "perfowave/errors.hpp"

namespace perfowave {
namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
  std::ostringstream os;
  os << errors.size() << " configuration error" << (errors.size() == 1 ? "" : "s");
  for (const auto& e : errors) os << "\n  " << e.field << ": " << e.message;
  return os.str();
}

bool is_multiple(double x, double h) {
  const double n = x / h;
  return std::abs(n - std::round(n)) <= 1e-9 * std::max(1.0, std::abs(n));
}

// Typed access to one TOML document with error collection and unknown-key
// detection.
class Reader {
public:
  explicit Reader(const toml::table& root) : root_(root) {}

  std::vector<FieldError> errors;

  const toml::table* section(const std::string& name) {
    sections_.insert(name);
    const auto* node = root_.get(name);
    if (!node) return nullptr;
    if (!node->is_table()) {
      error(name, "expected a table");
      return nullptr;
    }
    return node->as_table();
  }

  void error(std::string field, std::string message) { errors.push_back({std::move(field), std::move(message)}); }

  template <typename T>
  void read(const toml::table* t, const std::string& section, const std::string& key, T& out) {
    keys_[section].insert(key);
    if (!t) return;
    const auto* node = t->get(key);
    if (!node) return;
    const auto field = section.empty() ? key : section + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value_exact<bool>()) {
        out = *v;
        return;
      }
      error(field, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node->value_exact<std::string>()) {
        out = *v;
        return;
      }
      error(field, "expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (node->is_number()) {
        out = *node->value<double>();
        return;
      }
      error(field, "expected a number");
    } else {
      if (auto v = node->value_exact<std::int64_t>()) {
        if (*v < 0) {
          error(field, "must be non-negative");
          return;
        }
        out = static_cast<T>(*v);
        return;
      }
      error(field, "expected an integer");
    }
  }

  bool read_list(const toml::table* t, const std::string& section, const std::string& key, std::vector<double>& out) {
    keys_[section].insert(key);
    if (!t) return false;
    const auto* node = t->get(key);
    if (!node) return false;
    const auto field = section + "." + key;
    const auto* arr = node->as_array();
    if (!arr) {
      error(field, "expected an array of numbers");
      return false;
    }
    std::vector<double> values;
    for (const auto& el : *arr) {
      if (!el.is_number()) {
        error(field, "expected an array of numbers");
        return false;
      }
      values.push_back(*el.value<double>());
    }
    out = std::move(values);
    return true;
  }

  /// Registers a key that is handled by hand.
  void allow(const std::string& section, const std::string& key) { keys_[section].insert(key); }

  void reject_unknown() {
    for (const auto& [name, node] : root_) {
      const std::string key(name.str());
      if (node.is_table() && sections_.count(key)) {
        for (const auto& [sub, unused] : *node.as_table()) {
          (void)unused;
          const std::string subkey(sub.str());
          if (!keys_[key].count(subkey)) error(key + "." + subkey, "unknown key");
        }
      } else if (!keys_[""].count(key)) {
        error(key, "unknown key");
      }
    }
  }

private:
  const toml::table& root_;
  std::set<std::string> sections_;
  std::map<std::string, std::set<std::string>> keys_;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void read_noise(Reader& rd, const std::string& name, CovarianceSpec& spec) {
  const auto* t = rd.section(name);
  int modes = spec.modes;
  rd.read(t, name, "modes", modes);
  rd.read(t, name, "c", spec.c);
  rd.read(t, name, "gamma", spec.gamma);
  spec.modes = modes;
  rd.read_list(t, name, "alphas", spec.explicit_alphas);
}

void check_alignment(const RunConfig& c, std::vector<FieldError>& errors, double h, double eps,
                     const std::string& field) {
  const int d = c.domain.dim();
  for (int a = 0; a < d; ++a) {
    const std::string axis = " on axis " + std::to_string(a);
    if (!is_multiple(c.domain.upper[a] - c.domain.lower[a], h)) {
      errors.push_back({field, "spacing " + std::to_string(h) + " does not divide the domain edge" + axis});
    }
    if (c.cell.l.size() == d) {
      if (!is_multiple(eps * c.cell.l[a], h)) {
        errors.push_back({field, "spacing " + std::to_string(h) + " does not divide eps*l" + axis});
      }
      if (c.cell.hole && c.cell.hole->dim() == d &&
          (!is_multiple(eps * c.cell.hole->lower[a], h) || !is_multiple(eps * c.cell.hole->upper[a], h))) {
        errors.push_back({field, "hole faces do not lie on grid planes" + axis});
      }
      if (!(eps * c.cell.l[a] < c.domain.upper[a] - c.domain.lower[a])) {
        errors.push_back({field, "scaled cell is not smaller than the domain" + axis});
      }
    }
  }
}

std::vector<FieldError> semantic_errors(const RunConfig& c, std::vector<std::string>* warnings) {
  std::vector<FieldError> errors;
  const int d = c.domain.dim();
  bool geometry_ok = true;
  if (d != 2 && d != 3) {
    errors.push_back({"domain.lower", "dimension must be 2 or 3"});
    geometry_ok = false;
  } else if (c.domain.upper.size() != d) {
    errors.push_back({"domain.upper", "dimension differs from domain.lower"});
    geometry_ok = false;
  } else if (((c.domain.upper - c.domain.lower).array() <= 0.0).any()) {
    errors.push_back({"domain.upper", "upper corner must exceed the lower corner"});
    geometry_ok = false;
  }
  if (geometry_ok) {
    if (c.cell.l.size() != d) {
      errors.push_back({"cell.l", "dimension differs from the domain"});
      geometry_ok = false;
    } else if (c.cell.hole && (c.cell.hole->lower.size() != d || c.cell.hole->upper.size() != d)) {
      errors.push_back({"cell.hole", "hole corners must have the domain dimension"});
      geometry_ok = false;
    } else {
      try {
        c.cell.validate();
      } catch (const std::exception& e) {
        errors.push_back({"cell.hole", e.what()});
        geometry_ok = false;
      }
    }
  }
  if (c.format_version != kFormatVersion) {
    errors.push_back({"format_version", "unsupported version '" + c.format_version + "'"});
  }
  if (!(c.eps > 0.0 && c.eps < 1.0)) {
    errors.push_back({"grid.eps", "must lie in (0, 1)"});
    geometry_ok = false;
  }
  if (!(c.h > 0.0)) {
    errors.push_back({"grid.h", "must be positive"});
    geometry_ok = false;
  }
  if (geometry_ok) check_alignment(c, errors, c.h, c.eps, "grid.h");

  for (const auto* name : {"noise1", "noise2"}) {
    const auto& spec = std::string(name) == "noise1" ? c.noise1 : c.noise2;
    try {
      spec.validate(name);
    } catch (const ConfigError& e) {
      errors.push_back({e.field(), e.what()});
    }
  }

  if (!(c.stepper.dt > 0.0)) {
    errors.push_back({"stepper.dt", "must be positive"});
  } else {
    try {
      c.stepper.steps();
    } catch (const ConfigError& e) {
      errors.push_back({e.field(), e.what()});
    }
  }
  if (!(c.stepper.cg.relative_tolerance > 0.0)) errors.push_back({"stepper.tolerance", "must be positive"});
  if (c.stepper.cg.max_iterations == 0) errors.push_back({"stepper.max_iterations", "must be positive"});

  if (!(c.r >= 0.0 && c.r < 1.0)) {
    errors.push_back({"pseudo.r", "must lie in [0, 1)"});
  } else if (warnings && c.r > 0.5 * c.eps * c.eps) {
    warnings->push_back("pseudo.r = " + std::to_string(c.r) +
                        " exceeds eps^2/2; the pseudo energy is not sign-definite");
  }

  if (c.cell_solver.spacings.empty()) errors.push_back({"cell_solver.h_c", "must not be empty"});
  if (geometry_ok) {
    for (double hc : c.cell_solver.spacings) {
      if (!(hc > 0.0)) {
        errors.push_back({"cell_solver.h_c", "spacings must be positive"});
        continue;
      }
      for (int a = 0; a < d; ++a) {
        const bool edge = is_multiple(c.cell.l[a], hc);
        const bool hole = !c.cell.hole || (is_multiple(c.cell.hole->lower[a], hc) && is_multiple(c.cell.hole->upper[a], hc));
        if (!edge || !hole) {
          errors.push_back({"cell_solver.h_c", "spacing " + std::to_string(hc) + " does not align with the cell on axis " + std::to_string(a)});
        }
      }
    }
  }
  if (!(c.cell_solver.tolerance > 0.0)) errors.push_back({"cell_solver.tolerance", "must be positive"});

  try {
    c.ensemble.validate();
    if (geometry_ok) {
      for (double e : c.ensemble.eps_list) {
        check_alignment(c, errors, e * c.ensemble.h_over_eps, e, "ensemble.h_over_eps");
        MicroStepperConfig s;
        s.dt = e * c.ensemble.dt_over_eps;
        s.T = c.ensemble.T;
        try {
          s.steps();
        } catch (const ConfigError&) {
          errors.push_back({"ensemble.dt_over_eps", "T is not a multiple of dt for eps = " + std::to_string(e)});
        }
      }
    }
  } catch (const ConfigError& e) {
    errors.push_back({e.field(), e.what()});
  }

  if (c.energy_check.dt_list.size() < 2) errors.push_back({"energy_check.dt_list", "needs at least two steps"});
  for (double dt : c.energy_check.dt_list) {
    MicroStepperConfig s = c.stepper;
    s.dt = dt;
    try {
      s.steps();
    } catch (const ConfigError&) {
      errors.push_back({"energy_check.dt_list", "T is not a multiple of dt = " + std::to_string(dt)});
    }
  }
  if (!(c.energy_check.threshold > 0.0)) errors.push_back({"energy_check.threshold", "must be positive"});
  return errors;
}

}  // namespace

ConfigErrors::ConfigErrors(std::vector<FieldError> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

void validate_config(const RunConfig& config) {
  auto errors = semantic_errors(config, nullptr);
  if (!errors.empty()) throw ConfigErrors(std::move(errors));
}

RunConfig parse_config_string(const std::string& text, const std::string& source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    throw ConfigError("syntax", "line " + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
  }

  RunConfig c;
  c.source_text = text;
  Reader rd(root);
  rd.read(&root, "", "format_version", c.format_version);
  rd.read(&root, "", "seed", c.seed);

  {
    const auto* t = rd.section("domain");
    std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
    rd.read_list(t, "domain", "lower", lo);
    rd.read_list(t, "domain", "upper", hi);
    c.domain = Box{to_vector(lo), to_vector(hi)};
  }
  const int d = c.domain.dim();
  {
    const auto* t = rd.section("cell");
    std::vector<double> l(static_cast<std::size_t>(d), 1.0);
    rd.read_list(t, "cell", "l", l);
    c.cell.dim = d;
    c.cell.l = to_vector(l);
    std::vector<double> lo(static_cast<std::size_t>(d), 0.25), hi(static_cast<std::size_t>(d), 0.75);
    for (std::size_t a = 0; a < l.size() && a < lo.size(); ++a) {
      lo[a] = 0.25 * l[a];
      hi[a] = 0.75 * l[a];
    }
    std::string hole = "box";
    rd.read(t, "cell", "hole", hole);
    rd.read_list(t, "cell", "hole_lower", lo);
    rd.read_list(t, "cell", "hole_upper", hi);
    if (hole == "none") {
      c.cell.hole.reset();
    } else if (hole == "box") {
      c.cell.hole = Box{to_vector(lo), to_vector(hi)};
    } else {
      rd.error("cell.hole", "expected \"box\" or \"none\"");
    }
  }
  {
    const auto* t = rd.section("grid");
    rd.read(t, "grid", "h", c.h);
    rd.read(t, "grid", "eps", c.eps);
  }
  read_noise(rd, "noise1", c.noise1);
  read_noise(rd, "noise2", c.noise2);
  {
    const auto* t = rd.section("stepper");
    rd.read(t, "stepper", "dt", c.stepper.dt);
    rd.read(t, "stepper", "T", c.stepper.T);
    rd.read(t, "stepper", "implicit_laplacian", c.stepper.flags.implicit_laplacian);
    rd.read(t, "stepper", "implicit_damping", c.stepper.flags.implicit_damping);
    rd.read(t, "stepper", "implicit_boundary", c.stepper.flags.implicit_boundary);
    rd.read(t, "stepper", "tolerance", c.stepper.cg.relative_tolerance);
    rd.read(t, "stepper", "max_iterations", c.stepper.cg.max_iterations);
    rd.read(t, "stepper", "record_stride", c.stepper.record_stride);
    rd.read(t, "stepper", "record_noise", c.stepper.record_noise);
    rd.read(t, "stepper", "snapshot_stride", c.snapshot_stride);
  }
  {
    const auto* t = rd.section("pseudo");
    rd.read(t, "pseudo", "r", c.r);
  }
  {
    const auto* t = rd.section("initial");
    rd.read(t, "initial", "u_amplitude", c.initial.u_amplitude);
    rd.read(t, "initial", "v_amplitude", c.initial.v_amplitude);
    rd.read(t, "initial", "delta0", c.initial.delta0);
    rd.read(t, "initial", "theta0", c.initial.theta0);
  }
  {
    const auto* t = rd.section("cell_solver");
    rd.read_list(t, "cell_solver", "h_c", c.cell_solver.spacings);
    std::string variant = to_string(c.cell_solver.variant);
    rd.read(t, "cell_solver", "variant", variant);
    try {
      c.cell_solver.variant = tensor_variant_from_string(variant);
    } catch (const ConfigError&) {
      rd.error("cell_solver.variant", "expected gradient-form or paper-literal");
    }
    rd.read(t, "cell_solver", "tolerance", c.cell_solver.tolerance);
  }
  {
    auto& e = c.ensemble;
    e.eps_list = {0.25, 0.125, 0.0625};
    const auto* t = rd.section("ensemble");
    rd.read_list(t, "ensemble", "eps_list", e.eps_list);
    rd.read(t, "ensemble", "paths", e.paths);
    rd.read(t, "ensemble", "T", e.T);
    rd.read(t, "ensemble", "h_over_eps", e.h_over_eps);
    rd.read(t, "ensemble", "dt_over_eps", e.dt_over_eps);
    rd.read(t, "ensemble", "common_random_numbers", e.common_random_numbers);
    rd.read(t, "ensemble", "null_calibration", e.null_calibration);
    rd.read(t, "ensemble", "bootstrap", e.bootstrap_replicates);
    rd.read(t, "ensemble", "mean_field_blocks", e.mean_field_blocks);
    rd.read(t, "ensemble", "mean_field_outputs", e.mean_field_outputs);
  }
  {
    const auto* t = rd.section("energy_check");
    rd.read_list(t, "energy_check", "dt_list", c.energy_check.dt_list);
    rd.read(t, "energy_check", "threshold", c.energy_check.threshold);
    rd.read(t, "energy_check", "paths", c.energy_check.paths);
  }
  {
    const auto* t = rd.section("macro");
    std::string scaling = to_string(c.macro_scaling);
    rd.read(t, "macro", "scaling", scaling);
    try {
      c.macro_scaling = macro_scaling_from_string(scaling);
    } catch (const ConfigError&) {
      rd.error("macro.scaling", "expected paper-literal or derived-consistent");
    }
  }
  rd.reject_unknown();

  // Ensemble shares the geometry, noise and stepper settings of the run.
  c.ensemble.domain = c.domain;
  c.ensemble.noise1 = c.noise1;
  c.ensemble.noise2 = c.noise2;
  c.ensemble.seed = c.seed;
  c.ensemble.flags = c.stepper.flags;
  c.ensemble.cg = c.stepper.cg;

  auto errors = std::move(rd.errors);
  auto more = semantic_errors(c, &c.warnings);
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) throw ConfigErrors(std::move(errors));
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path.string());
}

}  // namespace perfowave
