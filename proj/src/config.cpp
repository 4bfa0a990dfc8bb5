#include "qlattice/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "qlattice/rng.hpp"

namespace qlattice {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (allowed.find(key) == allowed.end())
      throw ConfigError("config: unknown key \"" + key + "\" in " + where);
}

Rational rational_from_json(const nlohmann::json& v, const std::string& where) {
  try {
    if (v.is_string()) return Rational::parse(v.get<std::string>());
    if (v.is_number_integer()) return {v.get<std::int64_t>(), 1};
    if (v.is_number_float()) return Rational::from_double(v.get<double>());
  } catch (const std::exception& e) {
    throw ConfigError("config: bad rational in " + where + ": " + e.what());
  }
  throw ConfigError("config: expected number or \"p/q\" string in " + where);
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ExperimentConfig::validate() const {
  if (version != 1) throw ConfigError("config: unsupported version " + std::to_string(version));
  if (seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (learning_rates.empty()) throw ConfigError("config: at least one learning rate is required");
  for (const auto& lr : learning_rates) {
    const double v = lr.value();
    if (!(v > 0.0 && v < 1.0))
      throw ConfigError("config: learning rate " + lr.str() + " outside (0,1)");
  }
  if (algorithms.empty()) throw ConfigError("config: at least one algorithm is required");
  if (quantization.empty()) throw ConfigError("config: quantization list is empty");
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (trace_stride < 1) throw ConfigError("config: trace_stride must be >= 1");
  schedule.validate();
  if (objective.name == "mlp") objective.mlp.validate();
  if (objective.name != "quadratic" && objective.name != "double_well_1d" &&
      objective.name != "rastrigin" && objective.name != "ackley" && objective.name != "mlp")
    throw ConfigError("config: unknown objective \"" + objective.name + "\"");
  if (init_uniform && objective.name != "double_well_1d" && objective.name != "quadratic")
    throw ConfigError("config: init.uniform requires a low-dimensional objective");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  nlohmann::json jo;
  jo["name"] = objective.name;
  if (objective.name == "mlp") {
    jo["layers"] = objective.mlp.layers;
    jo["n_train"] = objective.mlp.n_train;
    jo["n_test"] = objective.mlp.n_test;
    jo["spread"] = objective.mlp.spread;
    jo["batch"] = objective.mlp.batch;
    jo["task_seed"] = objective.task_seed;
  } else {
    jo["dim"] = objective.dim;
    if (objective.name == "quadratic") jo["curvature"] = objective.curvature;
  }
  j["objective"] = jo;
  nlohmann::json joz;
  {
    std::vector<std::string> algos;
    for (const auto a : algorithms) algos.push_back(to_string(a));
    joz["algorithms"] = algos;
    joz["quantization"] = quantization;
    std::vector<std::string> lrs;
    for (const auto& lr : learning_rates) lrs.push_back(lr.str());
    joz["learning_rates"] = lrs;
    joz["epochs"] = epochs;
    joz["grad_tol"] = grad_tol;
    joz["vanish_stop"] = vanish_stop;
    joz["rescue"] = rescue;
  }
  j["optimizer"] = joz;
  nlohmann::json js;
  js["eta"] = schedule.eta;
  js["base"] = schedule.base;
  js["h_bar0"] = schedule.h_bar0;
  js["C"] = schedule.C;
  js["beta"] = schedule.beta;
  js["enforcement"] = to_string(schedule.enforcement);
  js["max_h_bar"] = schedule.max_h_bar;
  js["per_batch"] = schedule.per_batch;
  j["schedule"] = js;
  j["seeds"] = seeds;
  nlohmann::json jout;
  jout["dir"] = out_dir;
  jout["trace_stride"] = trace_stride;
  j["output"] = jout;
  if (init_uniform || init_fixed) {
    nlohmann::json ji;
    if (init_uniform) {
      ji["uniform_lo"] = init_uniform->first;
      ji["uniform_hi"] = init_uniform->second;
    }
    if (init_fixed) ji["fixed"] = *init_fixed;
    j["init"] = ji;
  }
  if (sde) {
    nlohmann::json jsde;
    jsde["alpha"] = sde->alpha.str();
    jsde["paths"] = sde->paths;
    jsde["epochs"] = sde->epochs;
    jsde["substeps"] = sde->substeps;
    jsde["diffusion"] = sde->diffusion;
    jsde["ks_threshold"] = sde->ks_threshold;
    jsde["compare"] = sde->compare;
    jsde["summary_stride"] = sde->summary_stride;
    if (sde->control_constant_q_p) jsde["control_constant_q_p"] = *sde->control_constant_q_p;
    if (sde->basin_split) jsde["basin_split"] = *sde->basin_split;
    j["sde"] = jsde;
  }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"version", "objective", "optimizer", "schedule", "seeds", "output", "init", "sde"},
             "top level");
  ExperimentConfig c;
  if (!j.contains("version")) throw ConfigError("config: missing \"version\"");
  c.version = j.at("version").get<int>();

  if (j.contains("objective")) {
    const auto& jo = j.at("objective");
    check_keys(jo,
               {"name", "dim", "curvature", "layers", "n_train", "n_test", "spread", "batch",
                "task_seed"},
               "objective");
    c.objective.name = jo.value("name", "quadratic");
    c.objective.dim = jo.value("dim", 2);
    c.objective.curvature = jo.value("curvature", 1.0);
    if (jo.contains("layers")) c.objective.mlp.layers = jo.at("layers").get<std::vector<int>>();
    c.objective.mlp.n_train = jo.value("n_train", c.objective.mlp.n_train);
    c.objective.mlp.n_test = jo.value("n_test", c.objective.mlp.n_test);
    c.objective.mlp.spread = jo.value("spread", c.objective.mlp.spread);
    c.objective.mlp.batch = jo.value("batch", c.objective.mlp.batch);
    c.objective.task_seed = jo.value("task_seed", std::uint64_t{0});
  }

  if (j.contains("optimizer")) {
    const auto& jz = j.at("optimizer");
    check_keys(jz,
               {"algorithms", "quantization", "learning_rates", "epochs", "grad_tol",
                "vanish_stop", "rescue"},
               "optimizer");
    if (jz.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : jz.at("algorithms")) c.algorithms.push_back(algorithm_from_string(a));
    }
    if (jz.contains("quantization"))
      c.quantization = jz.at("quantization").get<std::vector<bool>>();
    if (jz.contains("learning_rates")) {
      c.learning_rates.clear();
      for (const auto& v : jz.at("learning_rates"))
        c.learning_rates.push_back(rational_from_json(v, "optimizer.learning_rates"));
    }
    c.epochs = jz.value("epochs", c.epochs);
    c.grad_tol = jz.value("grad_tol", c.grad_tol);
    c.vanish_stop = jz.value("vanish_stop", c.vanish_stop);
    c.rescue = jz.value("rescue", c.rescue);
  }

  if (j.contains("schedule")) {
    const auto& js = j.at("schedule");
    check_keys(js, {"eta", "base", "h_bar0", "C", "beta", "enforcement", "max_h_bar", "per_batch"},
               "schedule");
    c.schedule.eta = js.value("eta", c.schedule.eta);
    c.schedule.base = js.value("base", c.schedule.base);
    c.schedule.h_bar0 = js.value("h_bar0", c.schedule.h_bar0);
    c.schedule.C = js.value("C", c.schedule.C);
    c.schedule.beta = js.value("beta", c.schedule.beta);
    if (js.contains("enforcement"))
      c.schedule.enforcement = enforcement_from_string(js.at("enforcement").get<std::string>());
    c.schedule.max_h_bar = js.value("max_h_bar", c.schedule.max_h_bar);
    c.schedule.per_batch = js.value("per_batch", c.schedule.per_batch);
  }

  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  if (j.contains("output")) {
    const auto& jo = j.at("output");
    check_keys(jo, {"dir", "trace_stride"}, "output");
    c.out_dir = jo.value("dir", c.out_dir);
    c.trace_stride = jo.value("trace_stride", c.trace_stride);
  }

  if (j.contains("init")) {
    const auto& ji = j.at("init");
    check_keys(ji, {"uniform_lo", "uniform_hi", "fixed"}, "init");
    if (ji.contains("uniform_lo") != ji.contains("uniform_hi"))
      throw ConfigError("config: init.uniform_lo and init.uniform_hi must appear together");
    if (ji.contains("uniform_lo"))
      c.init_uniform = {ji.at("uniform_lo").get<double>(), ji.at("uniform_hi").get<double>()};
    if (ji.contains("fixed")) c.init_fixed = ji.at("fixed").get<std::vector<double>>();
  }

  if (j.contains("sde")) {
    const auto& js = j.at("sde");
    check_keys(js,
               {"alpha", "paths", "epochs", "substeps", "diffusion", "ks_threshold", "compare",
                "summary_stride", "control_constant_q_p", "basin_split"},
               "sde");
    SdeSection s;
    if (js.contains("alpha")) s.alpha = rational_from_json(js.at("alpha"), "sde.alpha");
    s.paths = js.value("paths", s.paths);
    s.epochs = js.value("epochs", s.epochs);
    s.substeps = js.value("substeps", s.substeps);
    s.diffusion = js.value("diffusion", s.diffusion);
    s.ks_threshold = js.value("ks_threshold", s.ks_threshold);
    s.compare = js.value("compare", s.compare);
    s.summary_stride = js.value("summary_stride", s.summary_stride);
    if (js.contains("control_constant_q_p"))
      s.control_constant_q_p = js.at("control_constant_q_p").get<std::int64_t>();
    if (js.contains("basin_split")) s.basin_split = js.at("basin_split").get<double>();
    c.sde = s;
  }

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

std::unique_ptr<Objective> build_objective(const ObjectiveConfig& cfg, std::uint64_t run_seed) {
  if (cfg.name == "quadratic") return make_quadratic(cfg.dim, cfg.curvature, false);
  if (cfg.name == "double_well_1d") return make_double_well_1d(false);
  if (cfg.name == "rastrigin") return make_rastrigin(cfg.dim, false);
  if (cfg.name == "ackley") return make_ackley(cfg.dim, false);
  if (cfg.name == "mlp") return make_mlp_task(cfg.mlp, mix_seed(cfg.task_seed, run_seed), false);
  throw ConfigError("config: unknown objective \"" + cfg.name + "\"");
}

}  // namespace qlattice
