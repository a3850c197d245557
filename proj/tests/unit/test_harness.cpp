#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "drhmc/harness.hpp"
#include "drhmc/io.hpp"
#include "drhmc/models/funnel.hpp"
#include "drhmc/models/normal.hpp"

using namespace drhmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("drhmc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunSpec small_spec(const fs::path& out) {
  RunSpec s;
  s.model = "funnel";
  s.model_params = {{"d", 3}};
  s.methods = {"hmc"};
  s.eps_base = 0.2;
  s.eps_multipliers = {1.0};
  s.n_chains = 2;
  s.n_warmup = 50;
  s.n_draws = 100;
  s.seed = 7;
  s.output_dir = out;
  s.workers = 2;
  return s;
}

// Throws once a clone has been evaluated more than `limit` times.
class Budgeted final : public TargetModel {
 public:
  explicit Budgeted(std::uint64_t limit) : inner_({2, 3.0}), limit_(limit) {}
  std::string name() const override { return "budgeted"; }
  Index dim() const override { return 2; }
  std::unique_ptr<TargetModel> clone() const override { return std::make_unique<Budgeted>(limit_); }
  std::optional<ReferenceMoments> reference_moments() const override { return inner_.reference_moments(); }

 protected:
  double evaluate(const Vector& q, Vector& grad) const override {
    if (eval_count() > limit_) throw std::runtime_error("evaluation budget exhausted");
    return inner_.log_density_gradient(q, grad);
  }

 private:
  FunnelModel inner_;
  std::uint64_t limit_;
};

}  // namespace

TEST_CASE("minimal config gets documented defaults") {
  const auto s = parse_config_text(R"({"model": {"name": "funnel", "d": 5}, "method": "drhmc"})");
  CHECK(s.model == "funnel");
  CHECK(s.model_params["d"] == 5);
  CHECK(s.methods == std::vector<std::string>{"drhmc"});
  CHECK(s.n_chains == 50);
  CHECK(s.n_warmup == 1000);
  CHECK(s.n_draws == 20000);
  CHECK(s.eps_multipliers == std::vector<double>{0.5, 1.0, 2.0, 5.0});
  CHECK(s.k == std::vector<int>{2, 3, 4});
  CHECK(s.a == std::vector<int>{2, 5, 10});
  CHECK_FALSE(s.eps_base.has_value());
  CHECK(expand_grid(s).size() == 4 * 3 * 3);

  const auto schema = config_schema();
  for (const auto& key : {"model", "method", "k", "a", "n_chains", "n_warmup", "n_draws", "seed"}) {
    INFO(key);
    CHECK(schema["config"].contains(key));
  }
}

TEST_CASE("config errors name the field") {
  CHECK(config_error(R"({"model": "funnel", "k": 0})").rfind("k:", 0) == 0);
  CHECK(config_error(R"({"model": "funnel", "k": [2, 0]})").rfind("k", 0) == 0);
  CHECK(config_error(R"({"model": "funnel", "n_chains": 0})").rfind("n_chains", 0) == 0);
  CHECK(config_error(R"({"model": "funnel", "n_draws": "many"})").rfind("n_draws", 0) == 0);
  CHECK(config_error(R"({"model": {"name": "funnel", "d": 0}})").find("d") != std::string::npos);
  CHECK(config_error(R"({"model": "funnel", "colour": 1})").find("colour") != std::string::npos);
  CHECK(config_error(R"({"model": {"name": "funnel", "dd": 3}})").find("dd") != std::string::npos);
  CHECK(config_error(R"({"method": "hmc"})").rfind("model", 0) == 0);
  CHECK(config_error(R"({"model": "funnel", "method": "nuts"})").rfind("method", 0) == 0);
  CHECK(config_error(R"({"model": "funnel", "a": 1})").rfind("a:", 0) == 0);
  CHECK_THROWS(parse_config_text(R"({"model": "funnel", "seed": 1, "seed": 2})"));
  CHECK_THROWS(parse_config_text(R"({"model": {"name": "funnel", "d": 2, "d": 3}})"));
  CHECK_THROWS(parse_config_text(R"({"model": "funnel",)"));
}

TEST_CASE("grid expansion is the Cartesian product") {
  RunSpec s;
  s.methods = {"hmc", "drhmc", "drhmc-prob"};
  s.eps_multipliers = {1.0, 2.0};
  s.k = {2, 3};
  s.a = {2, 5, 10};
  const auto cells = expand_grid(s);
  CHECK(cells.size() == 2 * (1 + 6 + 6));
  std::set<std::string> labels;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].index == i);
    labels.insert(cells[i].label());
    if (cells[i].method == "hmc") CHECK(cells[i].k == 1);
    CHECK(cells[i].probabilistic == (cells[i].method == "drhmc-prob"));
  }
  CHECK(labels.size() == cells.size());
}

TEST_CASE("one cell, two chains: files, summary row and eval accounting") {
  const auto out = scratch("grid");
  const auto spec = small_spec(out);
  const auto result = run_grid(spec, GridOptions{true, true});
  REQUIRE(result.cells.size() == 1);
  const auto& cell = result.cells[0];
  REQUIRE(cell.ok);
  const auto dir = out / "cells" / cell.cell.label();
  CHECK(fs::exists(dir / "chain_000.csv"));
  CHECK(fs::exists(dir / "chain_001.csv"));
  CHECK_FALSE(fs::exists(dir / "chain_002.csv"));
  CHECK(fs::exists(dir / "sidecar.json"));
  CHECK(fs::exists(out / "run.json"));

  const auto summary = lines(slurp(out / "summary.csv"));
  CHECK(summary.size() == 1 + spec.moments.size());

  const auto draws = lines(slurp(dir / "chain_000.csv"));
  CHECK(draws.size() == 101);
  CHECK(draws[0] == "iteration,stage,stages_tried,cum_evals,beta,alpha2,alpha3");

  std::uint64_t sum = 0;
  for (const auto& ch : cell.chains) sum += ch.sampling_evals();
  CHECK(cell.n_evals == sum);
  for (const auto& s : cell.summary) CHECK(s.n_evals == double(sum));

  const auto side = parse_json_strict(slurp(dir / "sidecar.json"));
  CHECK(side["toolkit_version"] == kToolkitVersion);
  CHECK(side["n_evals"] == sum);
  CHECK(side["resolved"]["n_draws"] == 100);
  CHECK(side["chains"].size() == 2);
  CHECK(side["chains"][0]["seed"] == derive_seed(derive_seed(7, 0), 0));
}

TEST_CASE("reruns are byte-identical regardless of worker count") {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  auto sa = small_spec(a);
  sa.methods = {"hmc", "drhmc"};
  sa.k = {2};
  sa.a = {2};
  sa.n_chains = 3;
  auto sb = sa;
  sb.output_dir = b;
  sb.workers = 1;
  run_grid(sa);
  run_grid(sb);
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    INFO(rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
    ++compared;
  }
  CHECK(compared == 2 + 2 * 4);
  // and a rerun into the same directory overwrites identically
  const auto before = slurp(a / "summary.csv");
  run_grid(sa);
  CHECK(slurp(a / "summary.csv") == before);
}

TEST_CASE("a failing cell leaves the other cells intact") {
  const auto out = scratch("isolation");
  auto spec = small_spec(out);
  spec.methods = {"hmc", "drhmc"};
  spec.k = {4};
  spec.a = {10};
  spec.n_warmup = 0;
  spec.n_draws = 100;
  spec.reference = "analytic";
  // hmc needs 1 + 100 * 5 evals per chain; a single stage-2 attempt costs 60 more
  Budgeted model(520);
  const auto result = run_grid(spec, model);
  REQUIRE(result.cells.size() == 2);
  CHECK(result.cells[0].ok);
  CHECK_FALSE(result.cells[1].ok);
  CHECK(result.cells[1].error.find("budget") != std::string::npos);
  CHECK_FALSE(result.all_ok());
  CHECK(lines(slurp(out / "summary.csv")).size() == 1 + spec.moments.size());
  const auto side = parse_json_strict(slurp(out / "cells" / result.cells[1].cell.label() / "sidecar.json"));
  CHECK(side["status"] == "failed");
}

TEST_CASE("stage histogram counts every transition") {
  const auto out = scratch("figure");
  auto spec = small_spec(out);
  spec.methods = {"drhmc"};
  spec.k = {3};
  spec.a = {2};
  spec.eps_base = 0.6;
  spec.n_chains = 2;
  spec.n_draws = 300;
  figure_data("stage-histogram", spec);
  const auto rows = lines(slurp(out / "figure_stage-histogram.csv"));
  REQUIRE(rows.size() > 1);
  long total = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) total += std::stol(rows[i].substr(rows[i].rfind(',') + 1));
  CHECK(total == spec.n_chains * spec.n_draws);
  CHECK_THROWS(figure_data("bogus", spec));
}

TEST_CASE("funnel-marginal bins are 0.1 wide and normalized") {
  const auto out = scratch("marginal");
  auto spec = small_spec(out);
  spec.n_draws = 500;
  figure_data("funnel-marginal", spec);
  const auto rows = lines(slurp(out / "figure_funnel-marginal.csv"));
  REQUIRE(rows.size() > 2);
  CHECK(rows[0].find("bin_lo") != std::string::npos);
}

TEST_CASE("audit passes on the funnel and flat targets, and catches a non-involution") {
  AuditOptions opt;
  opt.points = 40;
  opt.max_stage = 3;
  for (const auto& r : audit_model(FunnelModel({2, 3.0}), opt)) {
    INFO(r.probe << " stage " << r.stage << " measured " << r.measured);
    CHECK(r.pass);
  }
  FlatModel flat(3);
  bool saw_jacobian = false;
  for (const auto& r : audit_model(flat, opt)) {
    if (r.probe != "jacobian") continue;
    saw_jacobian = true;
    CHECK(r.pass);
    CHECK(r.measured <= 1e-6);
  }
  CHECK(saw_jacobian);

  // drift without the momentum flip is not an involution
  const auto model = NormalModel::standard(2);
  const auto mass = MassMatrix::identity(2);
  const PhaseMap no_flip = [&](const PhasePoint& x) {
    return momentum_flip(flow_map(x, {0.1, 10, 1, 2}, mass, model));
  };
  PhasePoint x(Vector::Constant(2, 0.5), Vector::Constant(2, 1.0));
  CHECK(involution_error(no_flip, x) > 0.1);
}

TEST_CASE("gradcheck report") {
  const auto r = gradcheck_model(FunnelModel({5, 3.0}), 50, 3);
  CHECK(r.pass);
  CHECK(r.points == 50);
  CHECK(r.max_rel_error <= 1e-5);
}

TEST_CASE("number formatting round-trips") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(kNaN) == "nan");
  CHECK(format_double(-kInf) == "-inf");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("command line front end") {
  const auto dir = scratch("cli");
  {
    std::ofstream cfg(dir / "run.json");
    cfg << R"({"model": {"name": "funnel", "d": 2}, "method": "hmc", "eps_base": 0.2, "eps_multipliers": [1],
              "n_chains": 2, "n_warmup": 10, "n_draws": 50, "output_dir": "ignored"})";
  }
  const std::string cli = DRHMC_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + (dir / "log.txt").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  const std::string cfg = "--config \"" + (dir / "run.json").string() + "\"";
  CHECK(run("run " + cfg + " --out \"" + (dir / "out").string() + "\" --workers 2 --seed 5") == 0);
  CHECK(fs::exists(dir / "out" / "summary.csv"));
  CHECK(run("gradcheck " + cfg + " --points 10") == 0);
  CHECK(run("audit " + cfg + " --points 10") == 0);
  CHECK(slurp(dir / "log.txt").find("involution") != std::string::npos);
  CHECK(run("schema --out \"" + (dir / "schema").string() + "\"") == 0);
  CHECK(fs::exists(dir / "schema" / "schema.json"));
  CHECK(run("figure-data nonsense " + cfg) != 0);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"model": "funnel", "k": 0})";
  }
  CHECK(run("run --config \"" + (dir / "bad.json").string() + "\"") == 2);
  CHECK(slurp(dir / "log.txt").find("k:") != std::string::npos);
  CHECK(run("") != 0);
}

TEST_CASE("shipped presets parse and build their models") {
  const std::filesystem::path root = std::filesystem::path(DRHMC_SOURCE_DIR) / "configs";
  int seen = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    RunSpec spec;
    REQUIRE_NOTHROW(spec = parse_config(entry.path()));
    CHECK_FALSE(expand_grid(spec).empty());
    ++seen;
  }
  CHECK(seen >= 10);
}
