#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qlattice/objectives.hpp"
#include "qlattice/rng.hpp"
#include "qlattice/qlearn.hpp"
#include "qlattice/schedule.hpp"

namespace qlattice {

/// Which constant scales the diffusion 1/Q_p(t).
enum class DiffusionPreset {
  paper_n12,      // sqrt(n/12), the induced-SDE scale as written
  theorem_n24,    // sqrt(n/24), Theorem 1's sigma
  matched_alpha,  // alpha*sqrt(1/12) per component: matches the implemented iteration
};
DiffusionPreset diffusion_preset_from_string(const std::string& s);
std::string to_string(DiffusionPreset p);

/// Euler-Maruyama specification for dW = drift(W) ds + scale(t) dB.
struct SdeSpec {
  std::function<void(std::span<const double>, std::span<double>)> drift;  // -alpha*h(w)
  std::function<double(double)> diffusion_scale;  // per-component, as a function of epoch time t
  int dim = 1;
  int substeps_per_epoch = 1;  // N; ds = 1/N
  long epochs = 100;
  std::function<std::vector<double>(Rng&)> initial;    // per-path draw
  std::function<int(std::span<const double>)> basin_of;  // optional label for summaries
};

/// Builds the spec induced by a quantized run: drift -alpha*grad f, diffusion
/// scale/Q_p(t) with Q_p(t) simulated forward from the schedule.
SdeSpec make_induced_sde(const Objective& objective, double alpha, const ScheduleConfig& schedule,
                         long epochs, int substeps_per_epoch, DiffusionPreset preset);

/// One Euler-Maruyama update: w + drift*ds + scale(t)*sqrt(ds)*noise.
void em_step(std::span<const double> w, double t, const SdeSpec& spec,
             std::span<const double> noise, std::span<double> out);

struct EpochSummary {
  long epoch = 0;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> basin_fraction;  // index = basin label
};

struct EnsembleResult {
  std::vector<std::vector<double>> terminal;  // one row per surviving path
  std::vector<EpochSummary> per_epoch;        // recorded every `summary_stride` epochs
  std::vector<std::uint64_t> path_seeds;      // seed ledger
  long requested_paths = 0;
  long diverged = 0;

  nlohmann::json to_json() const;
  void write_summary_csv(const std::string& path) const;
};

/// Independent paths; path i uses the counter-derived stream mix(seed, i), so
/// the result is identical however paths are scheduled.
EnsembleResult simulate_ensemble(const SdeSpec& spec, int paths, std::uint64_t seed,
                                 int summary_stride = 1);

struct DivergenceReport {
  std::vector<double> ks_terminal;       // per coordinate, two-sample KS
  double ks_max = 0.0;
  double ks_threshold = 0.1;
  std::vector<double> optimizer_terminal_variance;
  std::vector<double> sde_terminal_variance;
  double mean_curve_max_gap = 0.0;  // max over epochs of ||mean_opt - mean_sde||_inf
  std::string diffusion_preset;
  long optimizer_paths = 0;
  long sde_paths = 0;
  bool pass() const { return ks_max <= ks_threshold; }
  nlohmann::json to_json() const;
};

/// Runs `paths` quantized-optimizer runs and `paths` EM paths under matched
/// alpha/schedule/horizon and compares terminal distributions per coordinate.
DivergenceReport compare_optimizer_to_sde(const Objective& objective, const RunConfig& run_config,
                                          const SdeSpec& spec, int paths, std::uint64_t seed,
                                          double ks_threshold = 0.1);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);

}  // namespace qlattice
