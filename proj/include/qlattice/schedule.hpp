#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qlattice {

struct LatticeOverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Enforcement { strict, clamped, off };

Enforcement enforcement_from_string(const std::string& s);
std::string to_string(Enforcement e);

/// Parameters of the resolution schedule Q_p(t) = eta * base^h_bar(t).
struct ScheduleConfig {
  double eta = 1.0;
  double base = 2.0;
  int h_bar0 = 2;
  double C = 1e6;       // theorem constant in inf sigma(t) = C / ln(t+2)
  double beta = 20.0;   // warm-up sharpness in the inf bound
  int n = 1;            // problem dimension (enters the h_bar bounds)
  Enforcement enforcement = Enforcement::clamped;
  int max_h_bar = 62;   // overflow cap on the resolution exponent
  bool per_batch = false;  // advance the schedule per mini-batch instead of per epoch

  void validate() const;
};

struct SchedulerState {
  long t = 0;
  int h_bar = 0;
  std::int64_t q_p = 1;
  double sup_h = 0.0;
  double inf_h = 0.0;
  long violations = 0;  // bound-raise events applied by check_bound
};

/// C / ln(t+2), the theorem's noise-floor trajectory.
double sigma_infimum(long t, double C);

/// 0.5 * log_base( n * ln(t+2) / (24 * eta^2 * C) ); may be negative.
double sup_h_bar(long t, const ScheduleConfig& config);

/// sup_h_bar(t) - beta / (t+2).
double inf_h_bar(long t, const ScheduleConfig& config);

/// round(eta * base^h_bar) as a positive integer. Exact integer powers when
/// eta == 1 and base is integral. Throws LatticeOverflowError past max_h_bar
/// or 2^62, std::invalid_argument when the value rounds below 1.
std::int64_t q_p_of(int h_bar, const ScheduleConfig& config);

/// sqrt(n/24) / q_p, Theorem 1's sigma(t).
double noise_floor_sigma(int n, std::int64_t q_p);
/// sqrt(n/12) / q_p, the diffusion scale as written in the induced SDE.
double noise_scale_eq8(int n, std::int64_t q_p);

/// Raise h_bar until it clears inf_h_bar(t) (clamped/strict; never lowers).
/// Strict mode throws LatticeOverflowError if the required h_bar exceeds the
/// cap; clamped stops at the cap. Off returns the state unchanged except for
/// refreshed sup/inf.
SchedulerState check_bound(SchedulerState state, const ScheduleConfig& config);

/// Initial state at t=0: h_bar = h_bar0, bounds computed, check_bound applied.
SchedulerState make_scheduler(const ScheduleConfig& config);

/// t+1, bounds recomputed, check_bound applied. h_bar never decreases.
SchedulerState advance_epoch(SchedulerState state, const ScheduleConfig& config);

/// True iff sigma(t) >= C / ln(t+2) at this state (the theorem precondition).
bool theorem_compliant(const SchedulerState& state, const ScheduleConfig& config);

}  // namespace qlattice
