// Experiment runner for the quantized-lattice learning library.
//
// Subcommands:
//   optimize   run the configured (algorithm x quantization x lr x seed) sweep
//   schedule   emit the resolution-schedule trajectory as CSV
//   wnh        white-noise test battery over a file or the built-in generator
//   sde        Euler-Maruyama ensembles of the induced SDE (+ optimizer comparison)
//   aggregate  rebuild a summary table from a directory of run records

#include <cstdio>
#include <cstdlib>
#include <thread>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qlattice/config.hpp"
#include "qlattice/harness.hpp"
#include "qlattice/quantizer.hpp"
#include "qlattice/rng.hpp"
#include "qlattice/sde.hpp"
#include "qlattice/wnh.hpp"

namespace fs = std::filesystem;
using namespace qlattice;

namespace {

std::string resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return out;
  if (const char* root = std::getenv("QLATTICE_OUT_ROOT"); root != nullptr && *root != '\0')
    return (fs::path(root) / p).string();
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto comma = csv.find(',', pos);
    const auto tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

int cmd_optimize(const std::string& config_path, const std::string& out_override,
                 const std::string& seeds_override, int jobs, bool strict, bool quiet) {
  auto config = ExperimentConfig::load(config_path);
  if (!seeds_override.empty()) config.seeds = parse_seed_list(seeds_override);
  config.validate();
  const std::string out = resolve_out(out_override.empty() ? config.out_dir : out_override);
  const auto result = run_sweep(config, jobs, !quiet);
  write_sweep_artifacts(out, config, result);
  long failures = 0;
  for (const auto& r : result.records)
    if (r.diverged) ++failures;
  if (!quiet) {
    std::fprintf(stderr, "%zu runs (%ld failed) -> %s\n", result.records.size(), failures,
                 out.c_str());
    for (const auto& row : result.summary.rows)
      std::fprintf(stderr, "  %-5s %s lr=%-12s train %7.3f+-%.3f  test %7.3f+-%.3f%s\n",
                   row.algorithm.c_str(), row.quantized ? "Qt" : "  ", row.lr.c_str(),
                   row.train_mean, row.train_std, row.test_mean, row.test_std,
                   row.failures > 0 ? "  [failures]" : "");
  }
  if (strict && failures > 0) return 1;
  return 0;
}

int cmd_schedule(const std::string& config_path, const std::string& out_override, long horizon) {
  const auto config = ExperimentConfig::load(config_path);
  ScheduleConfig sc = config.schedule;
  if (config.objective.name != "mlp") sc.n = config.objective.dim;
  const std::string out = resolve_out(out_override.empty() ? config.out_dir : out_override);
  fs::create_directories(out);
  const auto path = (fs::path(out) / "schedule.csv").string();
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::fprintf(f, "t,h_bar,q_p,sigma,sigma_eq8,inf_sigma,sup_h,inf_h,violations,theorem_ok\n");
  auto st = make_scheduler(sc);
  const long T = horizon > 0 ? horizon : config.epochs;
  for (long t = 0; t <= T; ++t) {
    std::fprintf(f, "%ld,%d,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%ld,%d\n", st.t, st.h_bar,
                 static_cast<long long>(st.q_p), noise_floor_sigma(sc.n, st.q_p),
                 noise_scale_eq8(sc.n, st.q_p), sigma_infimum(st.t, sc.C), st.sup_h, st.inf_h,
                 st.violations, theorem_compliant(st, sc) ? 1 : 0);
    st = advance_epoch(st, sc);
  }
  std::fclose(f);
  std::fprintf(stderr, "schedule trajectory -> %s\n", path.c_str());
  return 0;
}

int cmd_wnh(const std::string& input, const std::string& generator, long samples,
            std::int64_t q_p, int dim, int bins, int lags, double significance,
            const std::string& out_path, bool strict) {
  WnhConfig wc;
  wc.bins = bins;
  wc.max_lag = lags;
  wc.significance = significance;
  WnhReport report;
  std::size_t skipped = 0;
  try {
    if (!input.empty()) {
      const bool binary = input.size() > 4 && (input.substr(input.size() - 4) == ".bin" ||
                                               input.substr(input.size() - 4) == ".f64");
      report = wnh_test_file(input, wc, binary ? dim : 0, strict, &skipped);
    } else {
      // built-in generator: quantization errors of uniform inputs at q_p
      WnhAccumulator acc(wc, dim);
      Rng rng(12345);
      std::vector<double> row(static_cast<std::size_t>(dim));
      const QuantLevel level(q_p);
      const long rows = samples / dim;
      for (long i = 0; i < rows; ++i) {
        for (auto& v : row) v = rng.uniform(-10.0, 10.0);
        auto [lat, err] = quantize_vector(row, level);
        acc.add(err.errors);
      }
      if (generator == "constant") {
        // degenerate control: identical input repeated
        WnhAccumulator cacc(wc, dim);
        for (auto& v : row) v = 0.3;
        auto [lat, err] = quantize_vector(row, level);
        for (long i = 0; i < rows; ++i) cacc.add(err.errors);
        report = cacc.finalize();
      } else {
        report = acc.finalize();
      }
    }
  } catch (const InsufficientDataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  auto j = report.to_json();
  j["skipped_rows"] = skipped;
  if (!out_path.empty()) {
    std::ofstream out(resolve_out(out_path));
    out << j.dump(2) << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return report.pass() ? 0 : 3;
}

int cmd_sde(const std::string& config_path, const std::string& out_override, std::uint64_t seed) {
  const auto config = ExperimentConfig::load(config_path);
  if (!config.sde) throw ConfigError("config: sde subcommand requires an \"sde\" section");
  const auto& s = *config.sde;
  const std::string out = resolve_out(out_override.empty() ? config.out_dir : out_override);
  fs::create_directories(out);

  const auto objective = build_objective(config.objective, config.seeds.front());
  ScheduleConfig sc = config.schedule;
  sc.n = objective->dim();
  auto spec = make_induced_sde(*objective, s.alpha.value(), sc, s.epochs, s.substeps,
                               diffusion_preset_from_string(s.diffusion));
  if (config.init_uniform) {
    const auto lo = config.init_uniform->first, hi = config.init_uniform->second;
    const int n = objective->dim();
    spec.initial = [lo, hi, n](Rng& rng) {
      std::vector<double> w(static_cast<std::size_t>(n));
      for (auto& v : w) v = rng.uniform(lo, hi);
      return w;
    };
  }
  std::optional<double> split = s.basin_split;
  if (!split && objective->dim() == 1) split = find_1d_barrier(*objective);
  if (split) {
    const double b = *split;
    spec.basin_of = [b](std::span<const double> w) { return w[0] < b ? 0 : 1; };
  }

  const auto ens = simulate_ensemble(spec, s.paths, seed, s.summary_stride);
  ens.write_summary_csv((fs::path(out) / "ensemble_annealed.csv").string());
  nlohmann::json report;
  report["annealed"] = ens.to_json();
  report["seed"] = seed;
  report["diffusion"] = s.diffusion;

  if (s.control_constant_q_p) {
    auto control = spec;
    const double factor = spec.diffusion_scale(0.0) * static_cast<double>(make_scheduler(sc).q_p);
    const double qp = static_cast<double>(*s.control_constant_q_p);
    control.diffusion_scale = [factor, qp](double) { return factor / qp; };
    const auto cens = simulate_ensemble(control, s.paths, mix_seed(seed, 0xC0), s.summary_stride);
    cens.write_summary_csv((fs::path(out) / "ensemble_control.csv").string());
    report["control_constant_q_p"] = *s.control_constant_q_p;
    report["control"] = cens.to_json();
  }

  if (s.compare) {
    RunConfig rc;
    rc.step.alpha = s.alpha;
    rc.step.algorithm = Algorithm::sgd;
    rc.step.quantized = true;
    rc.step.rescue = config.rescue;
    rc.schedule = sc;
    rc.epochs = s.epochs;
    rc.vanish_stop = 0;
    rc.trace_stride = static_cast<int>(std::max<long>(1, s.epochs / 16));
    auto rep = compare_optimizer_to_sde(*objective, rc, spec, s.paths, mix_seed(seed, 0xC313),
                                        s.ks_threshold);
    rep.diffusion_preset = s.diffusion;
    report["divergence"] = rep.to_json();
  }

  std::ofstream jout(fs::path(out) / "sde_report.json");
  jout << report.dump(2) << "\n";
  std::fprintf(stderr, "sde artifacts -> %s\n", out.c_str());
  return 0;
}

int cmd_aggregate(const std::string& dir, const std::string& out_override) {
  const auto table = aggregate_directory(dir);
  const std::string out = resolve_out(out_override.empty() ? dir : out_override);
  fs::create_directories(out);
  {
    std::ofstream sj(fs::path(out) / "summary.json");
    sj << table.to_json().dump(2) << "\n";
  }
  table.write_csv((fs::path(out) / "summary.csv").string());
  for (const auto& row : table.rows)
    std::printf("%-5s %s lr=%-12s n=%d train %8.4f+-%.4f  test %8.4f+-%.4f  failures=%d\n",
                row.algorithm.c_str(), row.quantized ? "Qt" : "  ", row.lr.c_str(), row.seed_count,
                row.train_mean, row.train_std, row.test_mean, row.test_std, row.failures);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantized-lattice learning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_csv, input, generator = "uniform", out_path;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  bool strict = false, quiet = false;
  long horizon = 0, samples = 1000000;
  std::int64_t q_p = 8;
  int dim = 4, bins = 20, lags = 10;
  double significance = 0.01;
  std::uint64_t seed = 1;

  auto* opt = app.add_subcommand("optimize", "run the configured sweep");
  opt->add_option("--config", config_path, "experiment config JSON")->required();
  opt->add_option("--out", out_dir, "output directory (joined to $QLATTICE_OUT_ROOT if relative)");
  opt->add_option("--seeds", seeds_csv, "comma-separated seed override");
  opt->add_option("--jobs", jobs, "concurrent runs");
  opt->add_flag("--strict", strict, "non-zero exit if any run fails");
  opt->add_flag("--quiet", quiet, "suppress progress output");

  auto* sch = app.add_subcommand("schedule", "emit the schedule trajectory");
  sch->add_option("--config", config_path)->required();
  sch->add_option("--out", out_dir);
  sch->add_option("--horizon", horizon, "epochs to tabulate (default: optimizer.epochs)");

  auto* wnh = app.add_subcommand("wnh", "white-noise hypothesis battery");
  wnh->add_option("--input", input, "CSV (or .bin/.f64 packed float64) of error vectors");
  wnh->add_option("--generator", generator, "built-in source: uniform | constant");
  wnh->add_option("--samples", samples, "scalar samples for the generator");
  wnh->add_option("--qp", q_p, "quantization level for the generator");
  wnh->add_option("--dim", dim, "vector dimension (generator or binary input)");
  wnh->add_option("--bins", bins, "chi-square bins");
  wnh->add_option("--lags", lags, "autocorrelation lags");
  wnh->add_option("--significance", significance, "per-test significance");
  wnh->add_option("--out", out_path, "report JSON path (stdout if omitted)");
  wnh->add_flag("--strict", strict, "fail on malformed rows instead of skipping");

  auto* sde = app.add_subcommand("sde", "induced-SDE ensembles");
  sde->add_option("--config", config_path)->required();
  sde->add_option("--out", out_dir);
  sde->add_option("--seed", seed, "master seed for the ensembles");

  auto* agg = app.add_subcommand("aggregate", "summarize a directory of run records");
  agg->add_option("--dir", input, "directory of *.meta.json records")->required();
  agg->add_option("--out", out_dir, "where to write summary files (default: the same directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (opt->parsed()) return cmd_optimize(config_path, out_dir, seeds_csv, jobs, strict, quiet);
    if (sch->parsed()) return cmd_schedule(config_path, out_dir, horizon);
    if (wnh->parsed())
      return cmd_wnh(input, generator, samples, q_p, dim, bins, lags, significance, out_path,
                     strict);
    if (sde->parsed()) return cmd_sde(config_path, out_dir, seed);
    if (agg->parsed()) return cmd_aggregate(input, out_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
