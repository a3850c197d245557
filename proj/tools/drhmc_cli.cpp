// Command-line front end: run, audit, gradcheck, figure-data, schema.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "drhmc/harness.hpp"
#include "drhmc/io.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

drhmc::RunSpec load(const Overrides& o) {
  drhmc::RunSpec spec = drhmc::parse_config(o.config);
  if (o.seed) spec.seed = *o.seed;
  if (o.workers) spec.workers = *o.workers;
  if (o.out) spec.output_dir = *o.out;
  spec.validate();
  return spec;
}

void add_common(CLI::App* cmd, Overrides& o, bool needs_config) {
  auto* c = cmd->add_option("--config", o.config, "Run config (JSON)");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed (overrides config)");
  cmd->add_option("--workers", o.workers, "Worker threads, 0 = all cores (overrides config)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", o.out, "Output directory (overrides config)");
}

int cmd_run(const Overrides& o) {
  const auto spec = load(o);
  const auto result = drhmc::run_grid(spec);
  int failed = 0;
  for (const auto& c : result.cells) {
    if (!c.ok) {
      ++failed;
      std::cerr << "cell " << c.cell.label() << " failed: " << c.error << "\n";
    }
  }
  std::cout << result.cells.size() - failed << "/" << result.cells.size() << " cells ok; summary in "
            << (spec.output_dir / "summary.csv").string() << "\n";
  return failed ? 1 : 0;
}

int cmd_audit(const Overrides& o, int points) {
  const auto spec = load(o);
  const auto model = drhmc::make_model(spec.model, spec.model_params, spec.base_dir);
  drhmc::AuditOptions opt;
  opt.eps = spec.eps_base.value_or(0.1);
  opt.n_steps = std::max(1L, std::lround(spec.integration_time / opt.eps));
  opt.a = spec.a.front();
  opt.max_stage = *std::max_element(spec.k.begin(), spec.k.end());
  opt.points = points;
  opt.seed = spec.seed;
  std::printf("%-16s %5s %14s %10s %7s %s\n", "probe", "stage", "measured", "tolerance", "points", "result");
  for (const auto& r : drhmc::audit_model(*model, opt)) {
    std::printf("%-16s %5d %14.4g %10.3g %7d %s\n", r.probe.c_str(), r.stage, r.measured, r.tolerance, r.points,
                r.pass ? "PASS" : "FAIL");
  }
  return 0;
}

int cmd_gradcheck(const Overrides& o, int points) {
  const auto spec = load(o);
  const auto model = drhmc::make_model(spec.model, spec.model_params, spec.base_dir);
  const auto r = drhmc::gradcheck_model(*model, points, spec.seed);
  std::printf("model %s  points %d  max_rel_error %.3e  non_finite %d  %s\n", model->name().c_str(), r.points,
              r.max_rel_error, r.non_finite, r.pass ? "PASS" : "FAIL");
  return r.pass ? 0 : 1;
}

int cmd_figure(const Overrides& o, const std::string& id) {
  const auto spec = load(o);
  const auto result = drhmc::figure_data(id, spec);
  std::cout << "wrote " << (spec.output_dir / ("figure_" + id + ".csv")).string() << "\n";
  return result.all_ok() ? 0 : 1;
}

int cmd_schema(const Overrides& o) {
  const std::string text = drhmc::config_schema().dump(2) + "\n";
  if (!o.out) {
    std::cout << text;
    return 0;
  }
  std::filesystem::create_directories(*o.out);
  const auto path = std::filesystem::path(*o.out) / "schema.json";
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fputs(text.c_str(), f);
  std::fclose(f);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian Monte Carlo with delayed rejection: experiment runner"};
  app.require_subcommand(1);

  Overrides run_o, audit_o, grad_o, fig_o, schema_o;
  int audit_points = 100;
  int grad_points = 100;
  std::string figure_id;

  auto* run = app.add_subcommand("run", "Run every grid cell and write draws, sidecars and summary.csv");
  add_common(run, run_o, true);
  auto* audit = app.add_subcommand("audit", "Involution, volume and energy-scaling probes of the proposal maps");
  add_common(audit, audit_o, true);
  audit->add_option("--points", audit_points, "Random phase points per probe")->check(CLI::PositiveNumber);
  auto* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients at random points");
  add_common(grad, grad_o, true);
  grad->add_option("--points", grad_points, "Random points")->check(CLI::PositiveNumber);
  auto* fig = app.add_subcommand("figure-data", "Plot-ready CSV: funnel-marginal, stage-histogram, cost-ratio");
  fig->add_option("figure", figure_id, "Figure id")
      ->required()
      ->check(CLI::IsMember({"funnel-marginal", "stage-histogram", "cost-ratio"}));
  add_common(fig, fig_o, true);
  auto* schema = app.add_subcommand("schema", "Print config keys, defaults and output columns");
  add_common(schema, schema_o, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_o);
    if (*audit) return cmd_audit(audit_o, audit_points);
    if (*grad) return cmd_gradcheck(grad_o, grad_points);
    if (*fig) return cmd_figure(fig_o, figure_id);
    if (*schema) return cmd_schema(schema_o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
