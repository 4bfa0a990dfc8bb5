#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qlattice/config.hpp"
#include "qlattice/qlearn.hpp"

namespace qlattice {

struct RunPlanItem {
  Algorithm algorithm;
  bool quantized;
  Rational lr;
  std::uint64_t seed;
  std::string run_id;
};

std::vector<RunPlanItem> plan_sweep(const ExperimentConfig& config);

struct SummaryRow {
  std::string algorithm;
  bool quantized = false;
  std::string lr;
  double lr_value = 0.0;
  int seed_count = 0;
  int failures = 0;
  // train/test are classification accuracy when the objective provides it,
  // otherwise the final objective value
  double train_mean = 0.0, train_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;  // sorted by (algorithm, quantized, lr desc)
  std::string metric = "final_f";

  nlohmann::json to_json() const;
  void write_csv(const std::string& path) const;
};

SummaryTable summarize(const std::vector<RunRecord>& records);

struct SweepResult {
  std::vector<RunRecord> records;
  SummaryTable summary;
};

/// Executes the full sweep (algorithm x quantization x lr x seed) with up to
/// `jobs` concurrent workers; each worker owns one run end-to-end. Artifacts
/// are identical for any job count.
SweepResult run_sweep(const ExperimentConfig& config, int jobs, bool verbose = false);

/// Writes per-run trace CSV + metadata JSON, the canonical config, and the
/// summary table into `out_dir`.
void write_sweep_artifacts(const std::string& out_dir, const ExperimentConfig& config,
                           const SweepResult& result);

/// Rebuilds a SummaryTable from the *.meta.json files in a directory.
/// Mixed config hashes are an error listing the offending runs.
SummaryTable aggregate_directory(const std::string& dir);

}  // namespace qlattice
