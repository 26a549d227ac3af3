// perfowave: command-line front end.
//
//   perfowave cell         --config cell.toml  --out A_star.json [--variant gradient-form|paper-literal]
//   perfowave micro        --config run.toml   --out outdir [--seed N]
//   perfowave macro        --config run.toml   --out outdir [--tensor A_star.json] [--seed N]
//   perfowave energy-check --config run.toml   --out outdir
//   perfowave converge     --config study.toml --out report.json [--eps-list "0.25,0.125"] [--threads N]

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "perfowave/dispatch.hpp"

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    values.push_back(v);
  }
  if (values.empty()) throw std::invalid_argument(text);
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Sine-Gordon waves on perforated domains: micro solver, homogenization, convergence lab"};
  app.set_version_flag("--version", PERFOWAVE_VERSION);
  app.require_subcommand(1, 1);

  perfowave::CliOptions opt;
  std::uint64_t seed = 0;
  std::string eps_list;
  std::string variant;
  std::string tensor;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "TOML configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory, or report path ending in .json");
    sub->add_option("--threads", opt.threads, "worker threads (default: PERFOWAVE_THREADS or all cores)");
  };
  auto* cell = app.add_subcommand("cell", "solve the cell problems and write the effective tensor");
  add_common(cell);
  cell->add_option("--variant", variant, "tensor variant")->check(CLI::IsMember({"gradient-form", "paper-literal"}));
  auto* micro = app.add_subcommand("micro", "run one microscopic trajectory");
  add_common(micro);
  auto* macro = app.add_subcommand("macro", "run one homogenized trajectory");
  add_common(macro);
  macro->add_option("--tensor", tensor, "A_star.json from `perfowave cell`")->check(CLI::ExistingFile);
  auto* energy = app.add_subcommand("energy-check", "pseudo-energy identity self-convergence");
  add_common(energy);
  auto* converge = app.add_subcommand("converge", "micro/macro distribution study over eps");
  add_common(converge);
  converge->add_option("--eps-list", eps_list, "comma-separated decreasing eps values");
  converge->add_option("--tensor", tensor, "A_star.json from `perfowave cell`")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return perfowave::kExitUsage;
  }

  opt.command = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opt.seed = seed;
  if (!variant.empty()) opt.variant = perfowave::tensor_variant_from_string(variant);
  if (!tensor.empty()) opt.tensor = tensor;
  if (!eps_list.empty()) {
    try {
      opt.eps_list = parse_list(eps_list);
    } catch (const std::exception&) {
      std::cerr << "--eps-list: expected comma-separated numbers\n";
      return perfowave::kExitUsage;
    }
  }
  return perfowave::dispatch(opt, std::cerr);
}
