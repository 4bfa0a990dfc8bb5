#include "qlattice/wnh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

namespace qlattice {

void WnhConfig::validate() const {
  if (bins < 2) throw std::invalid_argument("WnhConfig: bins must be >= 2");
  if (max_lag < 1) throw std::invalid_argument("WnhConfig: max_lag must be >= 1");
  if (significance <= 0.0 || significance >= 1.0)
    throw std::invalid_argument("WnhConfig: significance must be in (0,1)");
}

WnhAccumulator::WnhAccumulator(WnhConfig config, int dim) : config_(config), dim_(dim) {
  config_.validate();
  if (dim < 1) throw std::invalid_argument("WnhAccumulator: dim must be >= 1");
  bin_counts_.assign(static_cast<std::size_t>(config_.bins), 0);
  lag_prod_.assign(static_cast<std::size_t>(config_.max_lag), 0.0);
  recent_.assign(static_cast<std::size_t>(config_.max_lag), 0.0);
  comp_sum_.assign(static_cast<std::size_t>(dim), 0.0);
  comp_sum_sq_.assign(static_cast<std::size_t>(dim), 0.0);
  pair_sum_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
}

void WnhAccumulator::add_scalar(double e) {
  // tolerate one ulp past the closed interval
  if (!std::isfinite(e) || std::fabs(e) > 0.5 + 1e-12)
    throw std::invalid_argument("WnhAccumulator: error outside [-0.5, 0.5]");
  sum_ += e;
  sum_sq_ += e * e;
  const double pos = (e + 0.5) * static_cast<double>(config_.bins);
  auto bin = static_cast<std::int64_t>(std::floor(pos));
  bin = std::clamp<std::int64_t>(bin, 0, config_.bins - 1);
  ++bin_counts_[static_cast<std::size_t>(bin)];
  const auto lag = static_cast<std::size_t>(config_.max_lag);
  for (std::size_t k = 1; k <= lag && count_ >= k; ++k) {
    const double past = recent_[(ring_pos_ + lag - k) % lag];
    lag_prod_[k - 1] += e * past;
  }
  recent_[ring_pos_] = e;
  ring_pos_ = (ring_pos_ + 1) % lag;
  ++count_;
}

void WnhAccumulator::add(std::span<const double> error_vec) {
  if (static_cast<int>(error_vec.size()) != dim_)
    throw std::invalid_argument("WnhAccumulator: wrong vector dimension");
  for (int i = 0; i < dim_; ++i) {
    const double e = error_vec[static_cast<std::size_t>(i)];
    add_scalar(e);
    comp_sum_[static_cast<std::size_t>(i)] += e;
    comp_sum_sq_[static_cast<std::size_t>(i)] += e * e;
    for (int j = i + 1; j < dim_; ++j)
      pair_sum_[static_cast<std::size_t>(i) * dim_ + j] += e * error_vec[static_cast<std::size_t>(j)];
  }
  ++rows_;
}

void WnhAccumulator::merge(const WnhAccumulator& other) {
  if (other.dim_ != dim_ || other.config_.bins != config_.bins ||
      other.config_.max_lag != config_.max_lag)
    throw std::invalid_argument("WnhAccumulator::merge: mismatched configuration");
  count_ += other.count_;
  rows_ += other.rows_;
  sum_ += other.sum_;
  sum_sq_ += other.sum_sq_;
  for (std::size_t b = 0; b < bin_counts_.size(); ++b) bin_counts_[b] += other.bin_counts_[b];
  for (std::size_t k = 0; k < lag_prod_.size(); ++k) lag_prod_[k] += other.lag_prod_[k];
  for (std::size_t i = 0; i < comp_sum_.size(); ++i) {
    comp_sum_[i] += other.comp_sum_[i];
    comp_sum_sq_[i] += other.comp_sum_sq_[i];
  }
  for (std::size_t i = 0; i < pair_sum_.size(); ++i) pair_sum_[i] += other.pair_sum_[i];
}

WnhReport WnhAccumulator::finalize() const {
  if (count_ < config_.min_samples)
    throw InsufficientDataError("wnh: insufficient data (" + std::to_string(count_) + " < " +
                                std::to_string(config_.min_samples) + " samples)");
  WnhReport r;
  r.sample_count = count_;
  r.dim = dim_;
  r.significance = config_.significance;
  const auto n = static_cast<double>(count_);
  r.empirical_mean = sum_ / n;
  r.empirical_variance = sum_sq_ / n - r.empirical_mean * r.empirical_mean;
  r.variance_rel_err = std::fabs(r.empirical_variance - 1.0 / 12.0) * 12.0;
  r.variance_ok = r.variance_rel_err <= config_.variance_rel_tol;

  r.chi_square_bins = config_.bins;
  const double expected = n / config_.bins;
  double chi = 0.0;
  for (const auto c : bin_counts_) {
    const double d = static_cast<double>(c) - expected;
    chi += d * d / expected;
  }
  r.chi_square_stat = chi;
  const boost::math::chi_squared chi_dist(config_.bins - 1);
  r.chi_square_critical = boost::math::quantile(chi_dist, 1.0 - config_.significance);
  r.uniformity_ok = chi <= r.chi_square_critical;

  // autocorrelation of the flattened stream; under H0 r_k ~ N(0, 1/N)
  const boost::math::normal norm;
  const double z = boost::math::quantile(norm, 1.0 - config_.significance / 2.0);
  r.autocorr_threshold = z / std::sqrt(n);
  const double var = r.empirical_variance;
  r.lag_autocorr.reserve(lag_prod_.size());
  bool ac_ok = true;
  for (std::size_t k = 1; k <= lag_prod_.size(); ++k) {
    const double pairs = n - static_cast<double>(k);
    double rk = 0.0;
    if (pairs > 0 && var > 0) {
      const double mean_prod = lag_prod_[k - 1] / pairs;
      rk = (mean_prod - r.empirical_mean * r.empirical_mean) / var;
    } else {
      rk = 1.0;  // degenerate stream: report full correlation
    }
    r.lag_autocorr.push_back(rk);
    if (std::fabs(rk) > r.autocorr_threshold) ac_ok = false;
  }
  r.autocorr_ok = ac_ok;

  // pairwise cross-component correlation with Bonferroni over the pairs
  r.max_cross_corr = 0.0;
  if (dim_ > 1 && rows_ > 1) {
    const auto rows = static_cast<double>(rows_);
    const std::size_t npairs = static_cast<std::size_t>(dim_) * (dim_ - 1) / 2;
    const double zb =
        boost::math::quantile(norm, 1.0 - config_.significance / (2.0 * static_cast<double>(npairs)));
    r.cross_corr_threshold = zb / std::sqrt(rows);
    for (int i = 0; i < dim_; ++i) {
      const double mi = comp_sum_[static_cast<std::size_t>(i)] / rows;
      const double vi = comp_sum_sq_[static_cast<std::size_t>(i)] / rows - mi * mi;
      for (int j = i + 1; j < dim_; ++j) {
        const double mj = comp_sum_[static_cast<std::size_t>(j)] / rows;
        const double vj = comp_sum_sq_[static_cast<std::size_t>(j)] / rows - mj * mj;
        double c = 1.0;  // degenerate components count as correlated
        if (vi > 0 && vj > 0)
          c = (pair_sum_[static_cast<std::size_t>(i) * dim_ + j] / rows - mi * mj) /
              std::sqrt(vi * vj);
        r.max_cross_corr = std::fmax(r.max_cross_corr, std::fabs(c));
      }
    }
    r.cross_corr_ok = r.max_cross_corr <= r.cross_corr_threshold;
  } else {
    r.cross_corr_threshold = 0.0;
    r.cross_corr_ok = true;  // nothing to test for scalar streams
  }
  return r;
}

nlohmann::json WnhReport::to_json() const {
  nlohmann::json j;
  j["sample_count"] = sample_count;
  j["dim"] = dim;
  j["significance"] = significance;
  j["empirical_mean"] = empirical_mean;
  j["empirical_variance"] = empirical_variance;
  j["expected_variance"] = 1.0 / 12.0;
  j["variance_rel_err"] = variance_rel_err;
  j["chi_square"] = {{"stat", chi_square_stat},
                     {"bins", chi_square_bins},
                     {"critical", chi_square_critical}};
  j["lag_autocorr"] = lag_autocorr;
  j["autocorr_threshold"] = autocorr_threshold;
  j["max_cross_corr"] = max_cross_corr;
  j["cross_corr_threshold"] = cross_corr_threshold;
  j["verdict"] = {{"variance", variance_ok},
                  {"uniformity", uniformity_ok},
                  {"autocorrelation", autocorr_ok},
                  {"cross_correlation", cross_corr_ok},
                  {"pass", pass()}};
  return j;
}

WnhReport wnh_test(std::span<const std::vector<double>> errors, const WnhConfig& config) {
  if (errors.empty()) throw InsufficientDataError("wnh: empty stream");
  WnhAccumulator acc(config, static_cast<int>(errors.front().size()));
  for (const auto& row : errors) acc.add(row);
  return acc.finalize();
}

namespace {

bool parse_csv_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::string token;
  // accept commas or whitespace
  std::string cleaned = line;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream fields(cleaned);
  double v = 0.0;
  while (fields >> token) {
    try {
      std::size_t pos = 0;
      v = std::stod(token, &pos);
      if (pos != token.size()) return false;
    } catch (const std::exception&) {
      return false;
    }
    out.push_back(v);
  }
  return !out.empty();
}

}  // namespace

WnhReport wnh_test_file(const std::string& path, const WnhConfig& config, int binary_dim,
                        bool strict, std::size_t* skipped_rows) {
  std::size_t skipped = 0;
  const bool binary = binary_dim > 0;
  std::unique_ptr<WnhAccumulator> acc;
  if (binary) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("wnh: cannot open " + path);
    acc = std::make_unique<WnhAccumulator>(config, binary_dim);
    std::vector<double> row(static_cast<std::size_t>(binary_dim));
    while (in.read(reinterpret_cast<char*>(row.data()),
                   static_cast<std::streamsize>(sizeof(double) * row.size()))) {
      acc->add(row);
    }
  } else {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("wnh: cannot open " + path);
    std::string line;
    std::vector<double> row;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      if (!parse_csv_row(line, row)) {
        if (strict)
          throw std::runtime_error("wnh: malformed row at " + path + ":" + std::to_string(lineno));
        ++skipped;
        continue;
      }
      if (!acc) acc = std::make_unique<WnhAccumulator>(config, static_cast<int>(row.size()));
      if (static_cast<int>(row.size()) != 0 && acc) {
        try {
          acc->add(row);
        } catch (const std::invalid_argument&) {
          if (strict) throw;
          ++skipped;
        }
      }
    }
  }
  if (skipped_rows != nullptr) *skipped_rows = skipped;
  if (!acc) throw InsufficientDataError("wnh: no parseable rows in " + path);
  return acc->finalize();
}

}  // namespace qlattice
