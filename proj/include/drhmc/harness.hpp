#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "drhmc/model.hpp"
#include "drhmc/sampler.hpp"

namespace drhmc {

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses JSON, rejecting duplicate object keys.
nlohmann::json parse_json_strict(const std::string& text);

/// Builds a model from its name and parameters (the `model` object of a run
/// config, minus `name`). Relative data paths resolve against `base_dir`.
std::unique_ptr<TargetModel> make_model(const std::string& name, const nlohmann::json& params,
                                        const std::filesystem::path& base_dir = {});

struct RunSpec {
  std::string model = "funnel";
  nlohmann::json model_params = nlohmann::json::object();
  std::filesystem::path base_dir;

  std::vector<std::string> methods{"drhmc"};
  double integration_time = 1.0;
  std::optional<double> eps_base;  // absent: adapt eps_f per chain during warmup
  std::vector<double> eps_multipliers{0.5, 1.0, 2.0, 5.0};
  std::vector<int> k{2, 3, 4};
  std::vector<int> a{2, 5, 10};
  long n_chains = 50;
  long n_warmup = 1000;
  long n_draws = 20000;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  double target_accept = 0.8;
  std::string retry_rule = "one-minus-alpha";
  std::string reference = "auto";  // auto | analytic | run | none
  long reference_chains = 4;
  long reference_draws = 20000;
  int bootstrap = 200;  // 0 disables confidence intervals
  std::vector<std::string> moments{"theta", "theta2"};
  int workers = 0;  // 0: hardware concurrency
  bool write_draws = true;

  void validate() const;
  /// Every field with defaults filled in, excluding `workers` and
  /// `output_dir`, which do not affect results.
  nlohmann::json resolved() const;
};

RunSpec parse_config_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunSpec parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});
RunSpec parse_config(const std::filesystem::path& path);

/// Documentation of config keys, output files and their columns.
nlohmann::json config_schema();

struct GridCell {
  std::size_t index = 0;
  std::string method;  // hmc | drhmc | drhmc-prob
  double multiplier = 1.0;
  int k = 1;
  int a = 2;
  bool probabilistic = false;

  std::string label() const;
};

std::vector<GridCell> expand_grid(const RunSpec& spec);
ChainSpec chain_spec_for(const RunSpec& spec, const GridCell& cell, Index dim);

struct MomentSummary {
  std::string moment;
  Index slowest_index = -1;
  double ess_r = kNaN;
  double ess_c = kNaN;  // total over chains; NaN without reference moments or with < 8 chains
  double n_evals = 0.0;
  double cost_r = kNaN;
  double cost_c = kNaN;
  double ci_lo = kNaN;  // bootstrap 68% interval of the headline cost (cost_c if defined, else cost_r)
  double ci_hi = kNaN;
  double ci_mean = kNaN;
};

/// Slowest-coordinate ESS and cost per moment ("theta" or "theta2") over the
/// sampling-phase evaluations of all chains.
std::vector<MomentSummary> summarize_chains(const std::vector<ChainResult>& chains,
                                            const std::optional<ReferenceMoments>& reference,
                                            const std::vector<std::string>& moments, int bootstrap,
                                            std::uint64_t bootstrap_seed);

struct CellOutcome {
  GridCell cell;
  bool ok = false;
  std::string error;
  double eps0_mean = kNaN;
  std::uint64_t n_evals = 0;
  std::vector<MomentSummary> summary;
  std::vector<ChainResult> chains;  // kept only when requested
};

struct GridResult {
  std::vector<CellOutcome> cells;
  std::optional<ReferenceMoments> reference;
  std::string reference_source;  // analytic | run | none
  bool all_ok() const;
};

struct GridOptions {
  bool write_outputs = true;
  bool keep_chains = false;
};

/// Runs every (cell, chain) pair on a worker pool and writes per-cell draws,
/// sidecars and summary.csv. A failing cell is reported without affecting
/// others.
GridResult run_grid(const RunSpec& spec, const GridOptions& options = {});
/// As above with an explicit model (cloned per chain) instead of spec.model.
GridResult run_grid(const RunSpec& spec, const TargetModel& model, const GridOptions& options = {});

/// Pooled moments of a long adaptive HMC run.
ReferenceMoments reference_run(const TargetModel& model, const RunSpec& spec);

void write_summary_csv(std::ostream& out, const RunSpec& spec, const std::string& model_name,
                       const GridResult& result);

struct AuditOptions {
  double eps = 0.1;
  long n_steps = 10;
  int a = 2;
  int max_stage = 4;
  int points = 100;
  std::uint64_t seed = 1;
  Index max_jacobian_dim = 5;
};

struct AuditRow {
  std::string probe;  // involution | jacobian | energy-scaling
  int stage = 1;
  double measured = kNaN;
  double tolerance = kNaN;
  bool pass = false;
  int points = 0;
};

/// Involution, volume and energy-error-scaling probes on random phase points.
std::vector<AuditRow> audit_model(const TargetModel& model, const AuditOptions& options);

struct GradcheckReport {
  double max_rel_error = 0.0;
  int points = 0;
  int non_finite = 0;
  bool pass = false;
};

GradcheckReport gradcheck_model(const TargetModel& model, int points, std::uint64_t seed, double tolerance = 1e-5);

/// figure id: funnel-marginal | stage-histogram | cost-ratio. Writes
/// figure_<id>.csv under spec.output_dir and returns the result grid.
GridResult figure_data(const std::string& figure_id, const RunSpec& spec);

inline constexpr double kFigureBinWidth = 0.1;
inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace drhmc
