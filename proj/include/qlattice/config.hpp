#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qlattice/mlp.hpp"
#include "qlattice/qlearn.hpp"
#include "qlattice/schedule.hpp"

namespace qlattice {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ObjectiveConfig {
  std::string name = "quadratic";
  int dim = 2;              // quadratic/rastrigin/ackley
  double curvature = 1.0;   // quadratic
  MlpTaskConfig mlp{};      // when name == "mlp"
  std::uint64_t task_seed = 0;

  bool operator==(const ObjectiveConfig&) const = default;
};

/// Controls for the sde subcommand.
struct SdeSection {
  Rational alpha{1, 128};
  int paths = 200;
  long epochs = 1000;
  int substeps = 4;
  std::string diffusion = "paper_n12";
  double ks_threshold = 0.1;
  bool compare = false;
  int summary_stride = 10;
  std::optional<std::int64_t> control_constant_q_p;  // adds a fixed-resolution control arm
  std::optional<double> basin_split;                 // 1-D basin boundary override

  bool operator==(const SdeSection&) const = default;
};

/// The experiment file: a versioned, fail-closed key-value schema. Unknown
/// keys anywhere are errors; values round-trip losslessly through to_json.
struct ExperimentConfig {
  int version = 1;
  ObjectiveConfig objective{};
  std::vector<Algorithm> algorithms{Algorithm::sgd};
  std::vector<bool> quantization{true, false};
  std::vector<Rational> learning_rates{Rational{1, 4}};
  long epochs = 100;
  double grad_tol = 0.0;
  int vanish_stop = 10;
  bool rescue = true;
  ScheduleConfig schedule{};
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";
  int trace_stride = 1;
  std::optional<std::pair<double, double>> init_uniform;  // 1-D start range
  std::optional<std::vector<double>> init_fixed;
  std::optional<SdeSection> sde;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  std::string hash() const;  // FNV-1a of the canonical serialization
};

std::string fnv1a_hex(const std::string& bytes);

/// Builds the configured objective; for "mlp" the dataset seed is
/// mix(task_seed, run_seed) so paired arms share data at equal seeds.
std::unique_ptr<Objective> build_objective(const ObjectiveConfig& cfg, std::uint64_t run_seed);

}  // namespace qlattice
