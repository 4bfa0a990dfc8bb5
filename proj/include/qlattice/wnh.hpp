#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qlattice {

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WnhConfig {
  int bins = 20;                  // chi-square cells over [-0.5, 0.5]
  int max_lag = 10;               // autocorrelation lags 1..max_lag
  double significance = 0.01;     // per-test significance level
  double variance_rel_tol = 0.005;  // |var - 1/12| / (1/12)
  std::size_t min_samples = 10000;

  void validate() const;
};

/// Empirical white-noise-hypothesis report for a stream of quantization
/// errors: variance vs 1/12, chi-square uniformity over [-0.5, 0.5],
/// lag-1..K autocorrelation, and max pairwise cross-component correlation.
struct WnhReport {
  std::size_t sample_count = 0;  // scalar error samples
  int dim = 1;                   // components per input vector
  double empirical_mean = 0.0;
  double empirical_variance = 0.0;
  double variance_rel_err = 0.0;

  double chi_square_stat = 0.0;
  int chi_square_bins = 0;
  double chi_square_critical = 0.0;

  std::vector<double> lag_autocorr;
  double autocorr_threshold = 0.0;

  double max_cross_corr = 0.0;
  double cross_corr_threshold = 0.0;

  double significance = 0.0;

  bool variance_ok = false;
  bool uniformity_ok = false;
  bool autocorr_ok = false;
  bool cross_corr_ok = false;

  bool pass() const { return variance_ok && uniformity_ok && autocorr_ok && cross_corr_ok; }

  nlohmann::json to_json() const;
};

/// Streaming accumulator. Single-owner; parallel use shards the stream into
/// several accumulators and merges the moment statistics afterwards.
/// (Autocorrelation does not merge across shard boundaries; the boundary
/// cross-terms are dropped, which loses max_lag products per shard.)
class WnhAccumulator {
 public:
  WnhAccumulator(WnhConfig config, int dim);

  /// One error vector; must have `dim` components, each in [-0.5, 0.5] up to slack.
  void add(std::span<const double> error_vec);
  void add_scalar(double e);

  void merge(const WnhAccumulator& other);

  std::size_t count() const { return count_; }

  /// Throws InsufficientDataError below config.min_samples.
  WnhReport finalize() const;

 private:
  WnhConfig config_;
  int dim_;
  std::size_t count_ = 0;     // scalar samples
  std::size_t rows_ = 0;      // vectors seen
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
  std::vector<std::size_t> bin_counts_;
  // lagged products over the flattened stream
  std::vector<double> lag_prod_;
  std::vector<double> recent_;  // ring of the last max_lag values
  std::size_t ring_pos_ = 0;
  // per-component and pairwise sums for cross-component correlation
  std::vector<double> comp_sum_, comp_sum_sq_;
  std::vector<double> pair_sum_;  // upper triangle, row-major
};

/// Convenience single-shot test over an in-memory stream of vectors.
WnhReport wnh_test(std::span<const std::vector<double>> errors, const WnhConfig& config);

/// Reads one error vector per row. CSV: comma- or whitespace-separated
/// doubles. Binary (".bin"/".f64"): packed little-endian float64 with `dim`
/// values per row. Malformed CSV rows are skipped (counted) unless `strict`.
WnhReport wnh_test_file(const std::string& path, const WnhConfig& config, int binary_dim = 0,
                        bool strict = false, std::size_t* skipped_rows = nullptr);

}  // namespace qlattice
