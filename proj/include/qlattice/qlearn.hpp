#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qlattice/objectives.hpp"
#include "qlattice/quantizer.hpp"
#include "qlattice/rational.hpp"
#include "qlattice/schedule.hpp"

namespace qlattice {

enum class Algorithm { sgd, adam };

Algorithm algorithm_from_string(const std::string& s);
std::string to_string(Algorithm a);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// The directional-derivative plug-in h = (J o grad f): identity for SGD,
/// the bias-corrected moment ratio for ADAM.
class DirectionalDerivative {
 public:
  DirectionalDerivative(Algorithm kind, int dim, AdamParams params = {});

  /// Consumes one gradient, updates moment state, returns h.
  std::vector<double> apply(std::span<const double> grad);

  Algorithm kind() const { return kind_; }
  long steps() const { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  Algorithm kind_;
  AdamParams params_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// SGD direction: the gradient itself (rejects non-finite components).
std::vector<double> direction_sgd(std::span<const double> grad);

/// Weight vector as integer numerators over denom = alpha_den * Q_p, the
/// authoritative representation; the double mirror feeds the objective.
class LatticeWeights {
 public:
  LatticeWeights() = default;

  /// Quantizes w0 onto the (1/q_p0) lattice (the induction base of Eq. (4)).
  LatticeWeights(std::span<const double> w0, std::int64_t q_p0, std::int64_t alpha_den);

  const std::vector<double>& values() const { return mirror_; }
  std::int64_t denom() const { return denom_; }
  std::span<const std::int64_t> numerators() const { return num_; }
  long rounded_rescales() const { return rounded_; }

  /// Move to a finer (or incompatible) lattice. Exact whenever old | new;
  /// otherwise requantizes and counts the event.
  void rescale(std::int64_t new_denom);

  /// w -= alpha_num * k / denom-units: numerators move by alpha_num * k.
  void apply_step(std::span<const std::int64_t> k, std::int64_t alpha_num);

  /// True when the float mirror round-trips to the stored integers.
  bool closure_exact() const;

 private:
  void refresh_mirror();
  std::vector<std::int64_t> num_;
  std::vector<double> mirror_;
  std::int64_t denom_ = 1;
  long rounded_ = 0;
};

struct StepConfig {
  Rational alpha{1, 2};
  Algorithm algorithm = Algorithm::sgd;
  bool quantized = true;
  bool rescue = true;  // Algorithm 2 on vanished directions
  AdamParams adam{};
};

struct StepOutcome {
  std::vector<double> new_weights;
  std::vector<double> quantized_direction;  // h^Q on the (1/Q_p) lattice
  std::vector<double> raw_direction;        // h
  std::vector<double> eps_applied;          // integer-grid errors of Q_p*h
  bool vanished_initially = false;
  bool vanished_at_cap = false;
  int h_bar_after = 0;
  int rescue_raises = 0;
};

struct RescueResult {
  std::vector<std::int64_t> k;   // round(Q_p*h) at the final resolution
  LatticeVector direction;       // h^Q
  SchedulerState scheduler;
  bool vanished_at_cap = false;
  int raises = 0;
};

/// Algorithm 2: while h^Q == 0 and h_bar is below the ceiling (sup h_bar
/// under strict/clamped enforcement, the overflow cap otherwise), raise the
/// resolution by one and requantize. Never lowers h_bar.
RescueResult rescue_vanishing(std::span<const double> h, SchedulerState scheduler,
                              const ScheduleConfig& config);

/// One optimization run's mutable state: plug-in, scheduler, lattice weights.
class Optimizer {
 public:
  Optimizer(std::span<const double> w0, StepConfig step_config, ScheduleConfig schedule_config);

  /// Quantized step per Eq. (5)/Algorithm 1, or the canonical Eq. (3) step
  /// when quantization is off.
  StepOutcome step(std::span<const double> grad);

  /// Algorithm 1's t <- t+1 plus the Algorithm 3 bound check.
  void advance_epoch();

  const std::vector<double>& weights() const;
  const SchedulerState& scheduler() const { return scheduler_; }
  const LatticeWeights& lattice() const { return lattice_; }
  const StepConfig& step_config() const { return step_config_; }
  const ScheduleConfig& schedule_config() const { return schedule_config_; }

  /// Lattice-closure audit: denom == alpha_den * Q_p and the mirror
  /// round-trips to the integers. Always true for unquantized runs.
  bool closure_ok() const;

 private:
  StepConfig step_config_;
  ScheduleConfig schedule_config_;
  DirectionalDerivative direction_;
  SchedulerState scheduler_;
  LatticeWeights lattice_;
  std::vector<double> plain_;  // unquantized weight path
};

/// Canonical update w - alpha*h (Eq. (3)); reference baseline.
std::vector<double> step_unquantized(std::span<const double> w, double alpha,
                                     std::span<const double> h);

struct TraceRow {
  long step = 0;
  long epoch = 0;
  int batch = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  int h_bar = 0;
  std::int64_t q_p = 1;
  double sigma = 0.0;      // sqrt(n/24)/Q_p (Theorem 1)
  double sigma_eq8 = 0.0;  // sqrt(n/12)/Q_p (Eq. (8) scale)
  double inf_sigma = 0.0;  // C/ln(t+2)
  double sup_h = 0.0;
  double inf_h = 0.0;
  long rescues = 0;
  bool vanished_at_cap = false;
  bool theorem_ok = false;
};

struct RunConfig {
  StepConfig step{};
  ScheduleConfig schedule{};
  long epochs = 100;
  double grad_tol = 0.0;  // stop when ||grad||_2 < tol; 0 disables
  int vanish_stop = 10;   // consecutive vanished-at-cap steps before stopping
  std::uint64_t seed = 0;
  int trace_stride = 1;
  double closure_sample_rate = 0.02;
  std::optional<std::vector<double>> init;
  std::string run_id = "run";
};

struct RunRecord {
  std::string run_id;
  Algorithm algorithm = Algorithm::sgd;
  bool quantized = true;
  Rational alpha;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::vector<TraceRow> trace;
  long epochs_run = 0;
  long steps = 0;
  double final_f = 0.0;
  double final_grad_norm = 0.0;
  std::optional<double> final_train_metric;
  std::optional<double> final_test_metric;
  std::optional<double> best_test_metric;
  std::vector<double> final_weights;

  long rescue_count = 0;
  long bound_violations = 0;
  long closure_checks = 0;
  long closure_violations = 0;
  long rounded_rescales = 0;
  int h_bar_final = 0;
  std::int64_t q_p_final = 1;
  bool theorem_compliant_all = true;
  bool stopped_on_vanish = false;
  bool stopped_on_grad_tol = false;
  bool diverged = false;
  std::string error;
  double wall_ms = 0.0;

  void write_trace_csv(const std::string& path) const;
  nlohmann::json metadata_json() const;
};

/// Algorithm 1's full loop: direction, quantization, Algorithm 2 rescue,
/// weight update, epoch advance with the Algorithm 3 bound check, until the
/// stopping criterion. Recoverable failures are recorded, not thrown.
RunRecord run(const Objective& objective, const RunConfig& config);

}  // namespace qlattice
