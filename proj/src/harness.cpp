#include "drhmc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "drhmc/diagnostics.hpp"
#include "drhmc/io.hpp"
#include "drhmc/models/data.hpp"
#include "drhmc/models/eight_schools.hpp"
#include "drhmc/models/funnel.hpp"
#include "drhmc/models/lighthouse.hpp"
#include "drhmc/models/mixture.hpp"
#include "drhmc/models/normal.hpp"
#include "drhmc/models/stoch_vol.hpp"

namespace drhmc {

using nlohmann::json;

namespace {


// --- strict JSON -----------------------------------------------------------

struct Frame {
  bool object = false;
  std::set<std::string> keys;
  std::string last_key;
};

std::string frame_path(const std::vector<Frame>& frames) {
  std::string out;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    if (!frames[i].object) continue;
    if (!out.empty()) out += '.';
    out += frames[i].last_key;
  }
  return out;
}

// --- typed field access with path-qualified errors ---------------------------

class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const json* v = find(key);
    if (!v) return require(key, fallback);
    if (!v->is_number()) throw ConfigError(where(key) + ": expected a number");
    return v->get<double>();
  }

  long integer(const std::string& key, std::optional<long> fallback = std::nullopt) {
    const json* v = find(key);
    if (!v) return require(key, fallback);
    return as_integer(*v, where(key));
  }

  std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const json* v = find(key);
    if (!v) return require(key, fallback);
    if (!v->is_string()) throw ConfigError(where(key) + ": expected a string");
    return v->get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    std::vector<double> out;
    for_each_item(*v, key, [&](const json& e, const std::string& p) {
      if (!e.is_number()) throw ConfigError(p + ": expected a number");
      out.push_back(e.get<double>());
    });
    return out;
  }

  std::vector<long> integers(const std::string& key, std::vector<long> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    std::vector<long> out;
    for_each_item(*v, key, [&](const json& e, const std::string& p) { out.push_back(as_integer(e, p)); });
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    std::vector<std::string> out;
    for_each_item(*v, key, [&](const json& e, const std::string& p) {
      if (!e.is_string()) throw ConfigError(p + ": expected a string");
      out.push_back(e.get<std::string>());
    });
    return out;
  }

  void finish() const {
    for (const auto& item : obj_.items())
      if (!used_.count(item.key())) throw ConfigError(where(item.key()) + ": unknown key");
  }

 private:
  template <typename T>
  T require(const std::string& key, const std::optional<T>& fallback) const {
    if (!fallback) throw ConfigError(where(key) + ": required key missing");
    return *fallback;
  }

  static long as_integer(const json& v, const std::string& p) {
    if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
    return v.get<long>();
  }

  template <typename F>
  void for_each_item(const json& v, const std::string& key, F&& f) const {
    if (v.is_array()) {
      if (v.empty()) throw ConfigError(where(key) + ": list must not be empty");
      for (std::size_t i = 0; i < v.size(); ++i) f(v[i], where(key) + "[" + std::to_string(i) + "]");
    } else {
      f(v, where(key));
    }
  }

  const json obj_;  // copied: callers may pass temporaries
  std::string path_;
  std::set<std::string> used_;
};

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base_dir) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base_dir.empty()) return base_dir / path;
  return path;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

json parse_json_strict(const std::string& text) {
  std::vector<Frame> frames;
  auto callback = [&](int, json::parse_event_t event, json& parsed) -> bool {
    switch (event) {
      case json::parse_event_t::object_start:
        frames.push_back(Frame{true, {}, {}});
        break;
      case json::parse_event_t::array_start:
        frames.push_back(Frame{false, {}, {}});
        break;
      case json::parse_event_t::object_end:
      case json::parse_event_t::array_end:
        frames.pop_back();
        break;
      case json::parse_event_t::key: {
        auto& top = frames.back();
        const auto key = parsed.get<std::string>();
        if (!top.keys.insert(key).second) {
          const auto p = frame_path(frames);
          throw ConfigError((p.empty() ? key : p + "." + key) + ": duplicate key");
        }
        top.last_key = key;
        break;
      }
      default:
        break;
    }
    return true;
  };
  try {
    return json::parse(text, callback);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
}

std::unique_ptr<TargetModel> make_model(const std::string& name, const json& params,
                                        const std::filesystem::path& base_dir) {
  Fields f(params.is_null() ? json::object() : params, "model");
  f.find("name");
  std::unique_ptr<TargetModel> model;
  try {
    if (name == "normal") {
      if (f.has("scales")) {
        if (f.has("d")) throw ConfigError("model: give either d or scales, not both");
        model = std::make_unique<NormalModel>(to_vector(f.numbers("scales", {})));
      } else {
        const long d = f.integer("d", 1);
        if (d < 1) throw ConfigError("model.d: must be >= 1");
        model = std::make_unique<NormalModel>(Vector::Ones(d));
      }
    } else if (name == "funnel") {
      FunnelSpec s;
      s.d = f.integer("d", 2);
      s.sigma = f.number("sigma", 3.0);
      if (s.d < 2) throw ConfigError("model.d: must be >= 2");
      if (!(s.sigma > 0.0)) throw ConfigError("model.sigma: must be > 0");
      model = std::make_unique<FunnelModel>(s);
    } else if (name == "mixture") {
      const auto def = MixtureSpec::benchmark();
      MixtureSpec s;
      s.weights = f.numbers("weights", def.weights);
      s.locations = f.numbers("locations", def.locations);
      s.scales = f.numbers("scales", def.scales);
      model = std::make_unique<MixtureModel>(s);
    } else if (name == "eight_schools") {
      const auto data = f.has("data") ? EightSchoolsData::load(resolve_path(f.string("data"), base_dir))
                                      : EightSchoolsData::rubin();
      model = std::make_unique<EightSchoolsModel>(data);
    } else if (name == "lighthouse") {
      if (f.has("data") && f.has("flashes")) throw ConfigError("model: give either data or flashes, not both");
      LighthouseData data = LighthouseData::benchmark();
      if (f.has("data")) data = LighthouseData::load(resolve_path(f.string("data"), base_dir));
      if (f.has("flashes")) data.flashes = f.numbers("flashes", {});
      model = std::make_unique<LighthouseModel>(data);
    } else if (name == "stoch_vol") {
      if (f.has("data") && f.has("simulate")) throw ConfigError("model: give either data or simulate, not both");
      StochVolData data;
      if (const json* sim = f.find("simulate")) {
        Fields s(*sim, "model.simulate");
        const long t = s.integer("T", 100);
        const double mu = s.number("mu", -1.0);
        const double sigma = s.number("sigma", 0.3);
        const double phi = s.number("phi", 0.95);
        const std::uint64_t seed = s.unsigned64("seed", 20);
        s.finish();
        Rng rng(seed);
        data = stoch_vol_simulate(rng, t, mu, sigma, phi);
      } else {
        const std::string path = f.string("data", (bundled_data_dir() / "stoch_vol.csv").string());
        data = StochVolData::load(resolve_path(path, base_dir));
      }
      model = std::make_unique<StochVolModel>(data);
    } else {
      throw ConfigError("model.name: unknown model '" + name +
                        "' (expected normal, funnel, mixture, eight_schools, lighthouse or stoch_vol)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  f.finish();
  return model;
}

// --- run spec ----------------------------------------------------------------

void RunSpec::validate() const {
  static const std::set<std::string> kMethods{"hmc", "drhmc", "drhmc-prob"};
  static const std::set<std::string> kMoments{"theta", "theta2"};
  static const std::set<std::string> kReferences{"auto", "analytic", "run", "none"};
  if (methods.empty()) throw ConfigError("method: at least one method required");
  for (const auto& m : methods)
    if (!kMethods.count(m)) throw ConfigError("method: unknown method '" + m + "' (expected hmc, drhmc or drhmc-prob)");
  if (!(integration_time > 0.0) || !std::isfinite(integration_time))
    throw ConfigError("integration_time: must be > 0");
  if (eps_base && (!(*eps_base > 0.0) || !std::isfinite(*eps_base))) throw ConfigError("eps_base: must be > 0");
  if (eps_multipliers.empty()) throw ConfigError("eps_multipliers: must not be empty");
  for (double m : eps_multipliers)
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("eps_multipliers: entries must be > 0");
  if (k.empty()) throw ConfigError("k: must not be empty");
  for (int v : k)
    if (v < 1 || v > kMaxStages) throw ConfigError("k: entries must be in [1, " + std::to_string(kMaxStages) + "]");
  if (a.empty()) throw ConfigError("a: must not be empty");
  for (int v : a)
    if (v < 2) throw ConfigError("a: entries must be integers >= 2");
  if (n_chains < 1) throw ConfigError("n_chains: must be >= 1");
  if (n_warmup < 0) throw ConfigError("n_warmup: must be >= 0");
  if (n_draws < 1) throw ConfigError("n_draws: must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target_accept: must be in (0, 1)");
  try {
    (void)RetryRule::parse(retry_rule);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("retry_rule: ") + e.what());
  }
  if (!kReferences.count(reference)) throw ConfigError("reference: expected auto, analytic, run or none");
  if (reference_chains < 1) throw ConfigError("reference_chains: must be >= 1");
  if (reference_draws < 10) throw ConfigError("reference_draws: must be >= 10");
  if (bootstrap != 0 && bootstrap < 200) throw ConfigError("bootstrap: must be 0 (off) or >= 200");
  if (moments.empty()) throw ConfigError("moments: must not be empty");
  for (const auto& m : moments)
    if (!kMoments.count(m)) throw ConfigError("moments: unknown moment '" + m + "' (expected theta or theta2)");
  if (workers < 0) throw ConfigError("workers: must be >= 0");
}

json RunSpec::resolved() const {
  json m = model_params;
  m["name"] = model;
  json out = {
      {"model", m},
      {"method", methods},
      {"integration_time", integration_time},
      {"eps_multipliers", eps_multipliers},
      {"k", k},
      {"a", a},
      {"n_chains", n_chains},
      {"n_warmup", n_warmup},
      {"n_draws", n_draws},
      {"seed", seed},
      {"target_accept", target_accept},
      {"retry_rule", retry_rule},
      {"reference", reference},
      {"reference_chains", reference_chains},
      {"reference_draws", reference_draws},
      {"bootstrap", bootstrap},
      {"moments", moments},
      {"write_draws", write_draws},
  };
  out["eps_base"] = eps_base ? json(*eps_base) : json(nullptr);
  return out;
}

RunSpec parse_config_json(const json& doc, const std::filesystem::path& base_dir) {
  Fields f(doc, "");
  RunSpec s;
  s.base_dir = base_dir;
  {
    const json* m = f.find("model");
    if (!m) throw ConfigError("model: required key missing");
    if (m->is_string()) {
      s.model = m->get<std::string>();
    } else {
      if (!m->is_object()) throw ConfigError("model: expected a name or an object");
      const auto it = m->find("name");
      if (it == m->end() || !it->is_string()) throw ConfigError("model.name: required string missing");
      s.model = it->get<std::string>();
      s.model_params = *m;
      s.model_params.erase("name");
    }
  }
  s.methods = f.strings("method", s.methods);
  s.integration_time = f.number("integration_time", s.integration_time);
  if (const json* e = f.find("eps_base"); e && !e->is_null()) {
    if (!e->is_number()) throw ConfigError("eps_base: expected a number");
    s.eps_base = e->get<double>();
  }
  s.eps_multipliers = f.numbers("eps_multipliers", s.eps_multipliers);
  auto ints = [](const std::vector<long>& v) { return std::vector<int>(v.begin(), v.end()); };
  s.k = ints(f.integers("k", {s.k.begin(), s.k.end()}));
  s.a = ints(f.integers("a", {s.a.begin(), s.a.end()}));
  s.n_chains = f.integer("n_chains", s.n_chains);
  s.n_warmup = f.integer("n_warmup", s.n_warmup);
  s.n_draws = f.integer("n_draws", s.n_draws);
  s.seed = f.unsigned64("seed", s.seed);
  s.output_dir = f.string("output_dir", s.output_dir.string());
  s.target_accept = f.number("target_accept", s.target_accept);
  s.retry_rule = f.string("retry_rule", s.retry_rule);
  s.reference = f.string("reference", s.reference);
  s.reference_chains = f.integer("reference_chains", s.reference_chains);
  s.reference_draws = f.integer("reference_draws", s.reference_draws);
  s.bootstrap = static_cast<int>(f.integer("bootstrap", s.bootstrap));
  s.moments = f.strings("moments", s.moments);
  s.workers = static_cast<int>(f.integer("workers", s.workers));
  s.write_draws = f.boolean("write_draws", s.write_draws);
  f.finish();
  s.validate();
  (void)make_model(s.model, s.model_params, s.base_dir);
  return s;
}

RunSpec parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  return parse_config_json(parse_json_strict(text), base_dir);
}

RunSpec parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

json config_schema() {
  auto key = [](const char* type, json def, const char* doc) {
    return json{{"type", type}, {"default", std::move(def)}, {"description", doc}};
  };
  json keys = {
      {"model", key("object", json{{"name", "funnel"}},
                    "Target: {\"name\": ..., model parameters}. normal {d | scales}; funnel {d=2, sigma=3}; "
                    "mixture {weights, locations, scales}; eight_schools {data: csv y,sigma}; "
                    "lighthouse {flashes | data: csv x}; stoch_vol {data: csv y[,h] | simulate {T=100, mu=-1, "
                    "sigma=0.3, phi=0.95, seed=20}}. A bare string selects the model with default parameters.")},
      {"method", key("string | [string]", json{"drhmc"}, "Any of hmc, drhmc, drhmc-prob.")},
      {"integration_time", key("number", 1.0, "Trajectory length T = eps0 * n_steps, fixed across stages.")},
      {"eps_base", key("number | null", nullptr,
                       "Base step size. null: adapt eps_f per chain by dual averaging during warmup.")},
      {"eps_multipliers", key("[number]", json{0.5, 1, 2, 5}, "Sampling eps0 = multiplier * base step size.")},
      {"k", key("int | [int]", json{2, 3, 4}, "Maximum number of stages (delayed-rejection methods).")},
      {"a", key("int | [int]", json{2, 5, 10}, "Step-size reduction factor per stage, integer >= 2.")},
      {"n_chains", key("int", 50, "Chains per grid cell.")},
      {"n_warmup", key("int", 1000, "Warmup iterations per chain (adaptation or burn-in).")},
      {"n_draws", key("int", 20000, "Sampling iterations per chain.")},
      {"seed", key("uint64", 1, "Master seed. Cell c, chain j uses mix(mix(seed + c) + j).")},
      {"output_dir", key("string", "out", "Output directory (overridden by --out).")},
      {"target_accept", key("number", 0.8, "Dual-averaging target acceptance.")},
      {"retry_rule", key("string", "one-minus-alpha",
                         "Retry probability for drhmc-prob: one-minus-alpha, always or constant:<p>.")},
      {"reference", key("string", "auto",
                        "Reference moments for error-based ESS: analytic, run (long adaptive HMC), none, or "
                        "auto (analytic when available, else run).")},
      {"reference_chains", key("int", 4, "Chains in a reference run.")},
      {"reference_draws", key("int", 20000, "Draws per reference chain.")},
      {"bootstrap", key("int", 200, "Bootstrap resamples over chains for cost intervals; 0 disables.")},
      {"moments", key("[string]", json{"theta", "theta2"}, "Moments summarized: theta and/or theta2.")},
      {"workers", key("int", 0, "Worker threads; 0 uses hardware concurrency (overridden by --workers).")},
      {"write_draws", key("bool", true, "Write per-chain draws CSV files.")},
  };
  json files = {
      {"cells/<label>/chain_<j>.csv",
       json{"iteration", "stage", "stages_tried", "cum_evals", "<one column per parameter>"}},
      {"cells/<label>/sidecar.json",
       "toolkit_version, config_hash, cell, cell_seed, status, resolved config, per-chain seed / eps0 / "
       "n_steps / adapted step size / inverse mass / evaluation counts / stage histogram, summary"},
      {"summary.csv", json{"model", "method", "eps0", "k", "a", "probabilistic", "moment", "slowest_index", "ess_r",
                           "ess_c", "n_evals", "cost_r", "cost_c", "ci_lo", "ci_hi"}},
      {"run.json", "toolkit_version, config_hash, resolved config, reference source and moments, cell status"},
      {"figure_funnel-marginal.csv",
       json{"cell", "method", "eps0", "k", "a", "bin_lo", "bin_hi", "count", "density", "reference_density"}},
      {"figure_stage-histogram.csv", json{"cell", "method", "eps0", "k", "a", "bin_lo", "bin_hi", "stage", "count"}},
      {"figure_cost-ratio.csv", json{"cell", "method", "eps0", "k", "a", "probabilistic", "moment", "cost", "ratio",
                                     "ratio_lo", "ratio_hi", "baseline_cell"}},
  };
  json notes = {
      {"stage", "Accepted stage; 0 when every stage was rejected."},
      {"cum_evals", "Joint log-density and gradient evaluations since the start of sampling."},
      {"n_evals", "Sum over chains of sampling-phase evaluations."},
      {"ess_r", "Autocorrelation ESS (Geyer initial positive sequence), summed over chains, slowest coordinate."},
      {"ess_c", "Error-based ESS (true_sd / se)^2 per chain times the chain count; needs >= 8 chains."},
      {"ci_lo/ci_hi", "Central 68% bootstrap interval of cost_c (cost_r when cost_c is undefined)."},
      {"eps0", "Mean sampling base step size over chains."},
  };
  return json{{"toolkit_version", kToolkitVersion}, {"config", keys}, {"files", files}, {"columns", notes}};
}

// --- grid ------------------------------------------------------------------

std::string GridCell::label() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%03zu_%s_m%s_k%d_a%d", index, method.c_str(), format_double(multiplier).c_str(), k,
                a);
  return buf;
}

std::vector<GridCell> expand_grid(const RunSpec& spec) {
  std::vector<GridCell> cells;
  for (const auto& method : spec.methods) {
    for (double m : spec.eps_multipliers) {
      if (method == "hmc") {
        cells.push_back(GridCell{cells.size(), method, m, 1, 2, false});
        continue;
      }
      for (int k : spec.k)
        for (int a : spec.a) cells.push_back(GridCell{cells.size(), method, m, k, a, method == "drhmc-prob"});
    }
  }
  return cells;
}

ChainSpec chain_spec_for(const RunSpec& spec, const GridCell& cell, Index dim) {
  ChainSpec cs;
  cs.n_warmup = spec.n_warmup;
  cs.n_draws = spec.n_draws;
  cs.config.k_max = cell.k;
  cs.config.a = cell.a;
  cs.config.probabilistic = cell.probabilistic;
  cs.config.retry_rule = RetryRule::parse(spec.retry_rule);
  cs.config.mass = MassMatrix::identity(dim);
  if (spec.eps_base) {
    cs.config.eps0 = *spec.eps_base * cell.multiplier;
    cs.config.n_steps = std::max(1L, std::lround(spec.integration_time / cs.config.eps0));
  } else {
    WarmupPlan plan;
    plan.target_accept = spec.target_accept;
    plan.integration_time = spec.integration_time;
    cs.adapt = plan;
    cs.eps_multiplier = cell.multiplier;
  }
  return cs;
}

std::vector<MomentSummary> summarize_chains(const std::vector<ChainResult>& chains,
                                            const std::optional<ReferenceMoments>& reference,
                                            const std::vector<std::string>& moments, int bootstrap,
                                            std::uint64_t bootstrap_seed) {
  if (chains.empty()) throw std::invalid_argument("summary: no chains");
  const std::size_t n = chains.size();
  const Index d = chains[0].draws.cols();
  std::vector<double> evals(n);
  double total_evals = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    evals[c] = static_cast<double>(chains[c].sampling_evals());
    total_evals += evals[c];
  }

  std::vector<MomentSummary> out;
  for (std::size_t mi = 0; mi < moments.size(); ++mi) {
    const bool squared = moments[mi] == "theta2";
    Matrix chain_mean(static_cast<Index>(n), d);
    Matrix chain_ess(static_cast<Index>(n), d);
    std::vector<double> series;
    for (std::size_t c = 0; c < n; ++c) {
      for (Index j = 0; j < d; ++j) {
        const auto col = chains[c].draws.col(j);
        series.assign(col.data(), col.data() + col.size());
        if (squared)
          for (double& v : series) v *= v;
        double s = 0.0;
        for (double v : series) s += v;
        chain_mean(static_cast<Index>(c), j) = s / static_cast<double>(series.size());
        const auto e = series.size() >= 10 ? autocorr_ess(series) : EssEstimate{};
        chain_ess(static_cast<Index>(c), j) = e.defined ? e.ess : 0.0;
      }
    }

    const bool have_c = reference && n >= 8;
    Vector mu, sd;
    if (have_c) {
      mu = squared ? reference->mean2 : reference->mean1;
      sd = squared ? reference->sd2 : reference->sd1;
    }
    auto ess_c_of = [&](std::span<const std::size_t> idx, Index j) {
      if (!(sd[j] > 0.0)) return kNaN;
      double sq = 0.0;
      for (std::size_t c : idx) sq += square(chain_mean(static_cast<Index>(c), j) - mu[j]);
      const double se2 = sq / static_cast<double>(idx.size());
      return se2 > 0.0 ? sd[j] * sd[j] / se2 * static_cast<double>(idx.size()) : kInf;
    };

    std::vector<std::size_t> all(n);
    for (std::size_t c = 0; c < n; ++c) all[c] = c;

    MomentSummary s;
    s.moment = moments[mi];
    s.n_evals = total_evals;
    double best = kInf;
    for (Index j = 0; j < d; ++j) {
      const double er = chain_ess.col(j).sum();
      const double ec = have_c ? ess_c_of(all, j) : kNaN;
      const double key = have_c ? ec : er;
      if (std::isnan(key)) continue;
      if (s.slowest_index < 0 || key < best) {
        best = key;
        s.slowest_index = j;
        s.ess_r = er;
        s.ess_c = ec;
      }
    }
    s.cost_r = cost_per_ess(total_evals, s.ess_r).value_or(kNaN);
    s.cost_c = cost_per_ess(total_evals, s.ess_c).value_or(kNaN);

    if (bootstrap >= 200 && n >= 8) {
      const bool use_c = have_c && std::isfinite(s.cost_c);
      Rng rng(derive_seed(bootstrap_seed, mi));
      const auto b = bootstrap_over_chains(n, bootstrap, rng, [&](std::span<const std::size_t> idx) {
        double ev = 0.0;
        for (std::size_t c : idx) ev += evals[c];
        double worst = kInf;
        for (Index j = 0; j < d; ++j) {
          double e;
          if (use_c) {
            e = ess_c_of(idx, j);
          } else {
            e = 0.0;
            for (std::size_t c : idx) e += chain_ess(static_cast<Index>(c), j);
          }
          if (!std::isnan(e)) worst = std::min(worst, e);
        }
        return cost_per_ess(ev, worst).value_or(kNaN);
      });
      s.ci_lo = b.lo;
      s.ci_hi = b.hi;
      s.ci_mean = b.mean;
    }
    out.push_back(s);
  }
  return out;
}

bool GridResult::all_ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.ok; });
}

namespace {

template <typename Task>
void run_pool(std::size_t n_tasks, int workers, Task&& task) {
  std::size_t w = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, std::thread::hardware_concurrency());
  w = std::min(w, n_tasks);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n_tasks; i = next++) task(i);
  };
  if (w <= 1) {
    body();
    return;
  }
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < w; ++i) threads.emplace_back(body);
  for (auto& t : threads) t.join();
}

json moments_json(const ReferenceMoments& m) {
  return json{{"mean1", to_std(m.mean1)}, {"sd1", to_std(m.sd1)}, {"mean2", to_std(m.mean2)}, {"sd2", to_std(m.sd2)}};
}

json summary_json(const MomentSummary& s) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); };
  return json{{"moment", s.moment},  {"slowest_index", s.slowest_index}, {"ess_r", num(s.ess_r)},
              {"ess_c", num(s.ess_c)}, {"n_evals", s.n_evals},           {"cost_r", num(s.cost_r)},
              {"cost_c", num(s.cost_c)}, {"ci_lo", num(s.ci_lo)},        {"ci_hi", num(s.ci_hi)},
              {"ci_mean", num(s.ci_mean)}};
}

json cell_json(const GridCell& c) {
  return json{{"label", c.label()}, {"method", c.method}, {"multiplier", c.multiplier},
              {"k", c.k},           {"a", c.a},           {"probabilistic", c.probabilistic}};
}

struct CellState {
  std::vector<ChainResult> chains;
  std::atomic<long> remaining{0};
  std::mutex mutex;
  std::string error;
  ChainSpec chain_spec;
  std::filesystem::path dir;
};

}  // namespace

ReferenceMoments reference_run(const TargetModel& model, const RunSpec& spec) {
  const auto n = static_cast<std::size_t>(spec.reference_chains);
  std::vector<ChainResult> chains(n);
  WarmupPlan plan;
  plan.target_accept = spec.target_accept;
  plan.integration_time = spec.integration_time;
  ChainSpec cs;
  cs.adapt = plan;
  cs.n_warmup = std::max(spec.n_warmup, 1000L);
  cs.n_draws = spec.reference_draws;
  cs.config.mass = MassMatrix::identity(model.dim());
  std::vector<std::string> errors(n);
  run_pool(n, spec.workers, [&](std::size_t c) {
    try {
      auto m = model.clone();
      chains[c] = run_chain(derive_seed(derive_seed(spec.seed, 0xFFFFFFFFULL), c), *m, cs);
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("reference run failed: " + e);
  Matrix pooled(static_cast<Index>(n) * spec.reference_draws, model.dim());
  for (std::size_t c = 0; c < n; ++c)
    pooled.middleRows(static_cast<Index>(c) * spec.reference_draws, spec.reference_draws) = chains[c].draws;
  return ReferenceMoments::from_draws(pooled);
}

GridResult run_grid(const RunSpec& spec, const GridOptions& options) {
  const auto model = make_model(spec.model, spec.model_params, spec.base_dir);
  return run_grid(spec, *model, options);
}

GridResult run_grid(const RunSpec& spec, const TargetModel& model, const GridOptions& options) {
  spec.validate();
  GridResult result;
  const auto analytic = model.reference_moments();
  if (spec.reference == "analytic" || (spec.reference == "auto" && analytic)) {
    if (!analytic) throw ConfigError("reference: model '" + model.name() + "' has no analytic moments");
    result.reference = analytic;
    result.reference_source = "analytic";
  } else if (spec.reference == "run" || spec.reference == "auto") {
    result.reference = reference_run(model, spec);
    result.reference_source = "run";
  } else {
    result.reference_source = "none";
  }

  const auto cells = expand_grid(spec);
  const json resolved = spec.resolved();
  const std::string config_hash = hex64(fnv1a(resolved.dump()));
  const auto names = model.parameter_names();
  const auto n_chains = static_cast<std::size_t>(spec.n_chains);

  if (options.write_outputs) std::filesystem::create_directories(spec.output_dir / "cells");

  std::vector<std::unique_ptr<CellState>> states;
  result.cells.resize(cells.size());
  for (const auto& cell : cells) {
    auto st = std::make_unique<CellState>();
    st->chains.resize(n_chains);
    st->remaining = spec.n_chains;
    st->dir = spec.output_dir / "cells" / cell.label();
    result.cells[cell.index].cell = cell;
    try {
      st->chain_spec = chain_spec_for(spec, cell, model.dim());
      if (options.write_outputs) std::filesystem::create_directories(st->dir);
    } catch (const std::exception& e) {
      st->error = e.what();
    }
    states.push_back(std::move(st));
  }

  auto finalize = [&](std::size_t ci) {
    CellState& st = *states[ci];
    CellOutcome& out = result.cells[ci];
    const GridCell& cell = cells[ci];
    const std::uint64_t cell_seed = derive_seed(spec.seed, cell.index);
    json side = {{"toolkit_version", kToolkitVersion},
                 {"config_hash", config_hash},
                 {"cell", cell_json(cell)},
                 {"cell_seed", cell_seed},
                 {"resolved", resolved}};
    try {
      if (!st.error.empty()) throw std::runtime_error(st.error);
      out.summary = summarize_chains(st.chains, result.reference, spec.moments, spec.bootstrap,
                                     derive_seed(cell_seed, 0xB0075712ULL));
      json chains = json::array();
      std::vector<long> hist(static_cast<std::size_t>(cell.k) + 1, 0);
      double eps_sum = 0.0;
      for (const auto& ch : st.chains) {
        const auto h = ch.stage_histogram();
        for (std::size_t s = 0; s < h.size(); ++s) hist[s] += h[s];
        long div = 0;
        for (auto v : ch.divergent) div += v;
        eps_sum += ch.config.eps0;
        out.n_evals += ch.sampling_evals();
        chains.push_back(json{{"seed", ch.seed},
                              {"eps0", ch.config.eps0},
                              {"n_steps", ch.config.n_steps},
                              {"adapted", ch.warmup.adapted},
                              {"adapted_step_size", ch.warmup.step_size},
                              {"mass_inverse", to_std(ch.config.mass.inverse())},
                              {"warmup_evals", ch.warmup_evals},
                              {"sampling_evals", ch.sampling_evals()},
                              {"stage_histogram", h},
                              {"divergent_transitions", div},
                              {"sampling_config_hash", hex64(ch.config_hash)}});
      }
      out.eps0_mean = eps_sum / static_cast<double>(st.chains.size());
      json summary = json::array();
      for (const auto& s : out.summary) summary.push_back(summary_json(s));
      side["status"] = "ok";
      side["n_evals"] = out.n_evals;
      side["stage_histogram"] = hist;
      side["chains"] = chains;
      side["summary"] = summary;
      side["diagnostics"] = {{"ess_truncation", "geyer-initial-positive-sequence"},
                             {"ess_pooling", "sum-of-per-chain"},
                             {"error_ess_se", "rms-about-reference-mean"},
                             {"n_evals_scope", "sampling-phase"},
                             {"reference_source", result.reference_source}};
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
      side["status"] = "failed";
      side["error"] = out.error;
    }
    if (options.write_outputs) {
      try {
        write_text(st.dir / "sidecar.json", side.dump(2) + "\n");
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
    if (options.keep_chains && out.ok)
      out.chains = std::move(st.chains);
    else
      std::vector<ChainResult>().swap(st.chains);
  };

  run_pool(cells.size() * n_chains, spec.workers, [&](std::size_t task) {
    const std::size_t ci = task / n_chains;
    const std::size_t chain = task % n_chains;
    CellState& st = *states[ci];
    bool skip;
    {
      std::lock_guard lock(st.mutex);
      skip = !st.error.empty();
    }
    if (!skip) {
      try {
        auto m = model.clone();
        const std::uint64_t seed = derive_seed(derive_seed(spec.seed, cells[ci].index), chain);
        ChainResult r = run_chain(seed, *m, st.chain_spec);
        if (m->eval_count() != r.total_evals()) throw std::logic_error("evaluation count mismatch");
        if (options.write_outputs && spec.write_draws) {
          char name[32];
          std::snprintf(name, sizeof name, "chain_%03zu.csv", chain);
          write_chain_csv(st.dir / name, r, names);
        }
        st.chains[chain] = std::move(r);
      } catch (const std::exception& e) {
        std::lock_guard lock(st.mutex);
        if (st.error.empty()) st.error = "chain " + std::to_string(chain) + ": " + e.what();
      }
    }
    if (--st.remaining == 0) finalize(ci);
  });

  if (options.write_outputs) {
    std::ostringstream csv;
    write_summary_csv(csv, spec, model.name(), result);
    write_text(spec.output_dir / "summary.csv", csv.str());
    json run = {{"toolkit_version", kToolkitVersion},
                {"config_hash", config_hash},
                {"resolved", resolved},
                {"model", model.name()},
                {"parameter_names", names},
                {"reference_source", result.reference_source}};
    if (result.reference) run["reference_moments"] = moments_json(*result.reference);
    json status = json::array();
    for (const auto& c : result.cells) {
      json row = {{"label", c.cell.label()}, {"status", c.ok ? "ok" : "failed"}};
      if (!c.ok) row["error"] = c.error;
      status.push_back(row);
    }
    run["cells"] = status;
    write_text(spec.output_dir / "run.json", run.dump(2) + "\n");
  }
  return result;
}

void write_summary_csv(std::ostream& out, const RunSpec&, const std::string& model_name, const GridResult& result) {
  out << "model,method,eps0,k,a,probabilistic,moment,slowest_index,ess_r,ess_c,n_evals,cost_r,cost_c,ci_lo,ci_hi\n";
  for (const auto& c : result.cells) {
    if (!c.ok) continue;
    for (const auto& s : c.summary) {
      out << model_name << ',' << c.cell.method << ',' << format_double(c.eps0_mean) << ',' << c.cell.k << ','
          << c.cell.a << ',' << (c.cell.probabilistic ? 1 : 0) << ',' << s.moment << ',' << s.slowest_index << ','
          << format_double(s.ess_r) << ',' << format_double(s.ess_c) << ','
          << static_cast<std::uint64_t>(s.n_evals) << ',' << format_double(s.cost_r) << ','
          << format_double(s.cost_c) << ',' << format_double(s.ci_lo) << ',' << format_double(s.ci_hi) << '\n';
    }
  }
}

// --- audit and gradient check -----------------------------------------------

namespace {

std::vector<PhasePoint> random_phase_points(const TargetModel& model, int count, Rng& rng) {
  std::vector<PhasePoint> pts;
  for (int i = 0; i < count; ++i) {
    Vector q = initial_position(rng, model);
    Vector p(model.dim());
    for (Index j = 0; j < p.size(); ++j) p[j] = standard_normal(rng);
    pts.emplace_back(std::move(q), std::move(p));
  }
  return pts;
}

}  // namespace

std::vector<AuditRow> audit_model(const TargetModel& model, const AuditOptions& o) {
  Rng rng(o.seed);
  const auto pts = random_phase_points(model, o.points, rng);
  const MassMatrix mass = MassMatrix::identity(model.dim());
  std::vector<AuditRow> rows;
  for (int stage = 1; stage <= o.max_stage; ++stage) {
    const ProposalMapSpec spec{o.eps, o.n_steps, stage, o.a};
    AuditRow inv{"involution", stage, 0.0, 1e-8, true, 0};
    AuditRow jac{"jacobian", stage, 0.0, 1e-5, true, 0};
    int jac_budget = std::min(o.points, 50);
    for (const auto& p0 : pts) {
      PhasePoint x(p0.q, p0.p);
      const double h0 = hamiltonian(x, mass, model);
      const PhasePoint y = flow_map(x, spec, mass, model);
      if (y.poisoned() || std::abs(hamiltonian(y, mass) - h0) > 100.0) continue;
      inv.measured = std::max(inv.measured, involution_error(spec, mass, model, x));
      ++inv.points;
      if (model.dim() <= o.max_jacobian_dim && jac_budget-- > 0) {
        const auto probe = jacobian_determinant_probe(spec, mass, model, x);
        jac.measured = probe.ok ? std::max(jac.measured, std::abs(probe.abs_det - 1.0)) : kInf;
        ++jac.points;
      }
    }
    inv.pass = inv.points > 0 && inv.measured <= inv.tolerance;
    rows.push_back(inv);
    if (model.dim() <= o.max_jacobian_dim) {
      jac.pass = jac.points > 0 && jac.measured <= jac.tolerance;
      rows.push_back(jac);
    }
  }

  const double time = o.eps * static_cast<double>(o.n_steps);
  const std::vector<double> steps{o.eps, o.eps / 2, o.eps / 4, o.eps / 8};
  std::vector<PhasePoint> stable;
  for (const auto& p0 : pts) {
    PhasePoint x(p0.q, p0.p);
    const double h0 = hamiltonian(x, mass, model);
    const PhasePoint y = flow_map(x, ProposalMapSpec{o.eps, o.n_steps, 1, 2}, mass, model);
    if (!y.poisoned() && std::abs(hamiltonian(y, mass) - h0) < 1.0) stable.push_back(x);
  }
  AuditRow scaling{"energy-scaling", 1, kNaN, 0.1, false, static_cast<int>(stable.size())};
  if (!stable.empty()) {
    const auto es = energy_error_scaling(stable, time, steps, mass, model);
    scaling.measured = es.slope;
    scaling.pass = std::abs(es.slope - 2.0) <= scaling.tolerance;
  }
  rows.push_back(scaling);
  return rows;
}

GradcheckReport gradcheck_model(const TargetModel& model, int points, std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  GradcheckReport r;
  for (int i = 0; i < points; ++i) {
    const Vector q = initial_position(rng, model);
    const auto g = check_gradient(model, q);
    if (!g.finite) ++r.non_finite;
    r.max_rel_error = std::max(r.max_rel_error, g.max_rel_error);
    ++r.points;
  }
  r.pass = r.non_finite == 0 && r.max_rel_error <= tolerance;
  return r;
}

// --- figure data ------------------------------------------------------------

namespace {

long bin_of(double v) { return static_cast<long>(std::floor(v / kFigureBinWidth)); }
double bin_edge(long b) { return static_cast<double>(b) / 10.0; }

std::string cell_prefix(const CellOutcome& c) {
  return c.cell.label() + ',' + c.cell.method + ',' + format_double(c.eps0_mean) + ',' + std::to_string(c.cell.k) +
         ',' + std::to_string(c.cell.a);
}

double headline_cost(const MomentSummary& s) { return std::isfinite(s.cost_c) ? s.cost_c : s.cost_r; }

}  // namespace

GridResult figure_data(const std::string& figure_id, const RunSpec& spec) {
  if (figure_id != "funnel-marginal" && figure_id != "stage-histogram" && figure_id != "cost-ratio")
    throw ConfigError("figure: unknown figure id '" + figure_id +
                      "' (expected funnel-marginal, stage-histogram or cost-ratio)");
  const auto model = make_model(spec.model, spec.model_params, spec.base_dir);
  GridOptions opts;
  opts.keep_chains = figure_id != "cost-ratio";
  GridResult result = run_grid(spec, *model, opts);
  std::ostringstream csv;

  if (figure_id == "funnel-marginal") {
    const auto* funnel = dynamic_cast<const FunnelModel*>(model.get());
    csv << "cell,method,eps0,k,a,bin_lo,bin_hi,count,density,reference_density\n";
    for (const auto& c : result.cells) {
      if (!c.ok) continue;
      std::map<long, long> counts;
      long total = 0;
      for (const auto& ch : c.chains)
        for (Index i = 0; i < ch.draws.rows(); ++i) {
          ++counts[bin_of(ch.draws(i, 0))];
          ++total;
        }
      if (counts.empty()) continue;
      for (long b = counts.begin()->first; b <= counts.rbegin()->first; ++b) {
        const auto it = counts.find(b);
        const long n = it == counts.end() ? 0 : it->second;
        double ref = kNaN;
        if (funnel) {
          const double s = funnel->spec().sigma;
          ref = (normal_cdf(bin_edge(b + 1), 0.0, s) - normal_cdf(bin_edge(b), 0.0, s)) / kFigureBinWidth;
        }
        csv << cell_prefix(c) << ',' << format_double(bin_edge(b)) << ',' << format_double(bin_edge(b + 1)) << ','
            << n << ',' << format_double(static_cast<double>(n) / (static_cast<double>(total) * kFigureBinWidth))
            << ',' << format_double(ref) << '\n';
      }
    }
  } else if (figure_id == "stage-histogram") {
    csv << "cell,method,eps0,k,a,bin_lo,bin_hi,stage,count\n";
    for (const auto& c : result.cells) {
      if (!c.ok) continue;
      std::map<std::pair<long, int>, long> counts;
      for (const auto& ch : c.chains)
        for (Index i = 0; i < ch.draws.rows(); ++i)
          ++counts[{bin_of(ch.transition_origin(i)[0]), ch.stage_tags[static_cast<std::size_t>(i)]}];
      for (const auto& [key, n] : counts)
        csv << cell_prefix(c) << ',' << format_double(bin_edge(key.first)) << ','
            << format_double(bin_edge(key.first + 1)) << ',' << key.second << ',' << n << '\n';
    }
  } else {
    csv << "cell,method,eps0,k,a,probabilistic,moment,cost,ratio,ratio_lo,ratio_hi,baseline_cell\n";
    for (std::size_t mi = 0; mi < spec.moments.size(); ++mi) {
      const CellOutcome* base = nullptr;
      for (const auto& c : result.cells) {
        if (!c.ok || c.cell.method != "hmc") continue;
        const double cost = headline_cost(c.summary[mi]);
        if (!std::isfinite(cost)) continue;
        if (!base || cost < headline_cost(base->summary[mi])) base = &c;
      }
      if (!base) throw ConfigError("method: cost-ratio needs at least one successful hmc cell");
      const double b = headline_cost(base->summary[mi]);
      for (const auto& c : result.cells) {
        if (!c.ok) continue;
        const auto& s = c.summary[mi];
        csv << cell_prefix(c) << ',' << (c.cell.probabilistic ? 1 : 0) << ',' << s.moment << ','
            << format_double(headline_cost(s)) << ',' << format_double(headline_cost(s) / b) << ','
            << format_double(s.ci_lo / b) << ',' << format_double(s.ci_hi / b) << ',' << base->cell.label() << '\n';
      }
    }
  }
  std::filesystem::create_directories(spec.output_dir);
  write_text(spec.output_dir / ("figure_" + figure_id + ".csv"), csv.str());
  return result;
}

}  // namespace drhmc
