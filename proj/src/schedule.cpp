#include "qlattice/schedule.hpp"

#include <cmath>

namespace qlattice {

Enforcement enforcement_from_string(const std::string& s) {
  if (s == "strict") return Enforcement::strict;
  if (s == "clamped") return Enforcement::clamped;
  if (s == "off") return Enforcement::off;
  throw std::invalid_argument("unknown enforcement mode: " + s);
}

std::string to_string(Enforcement e) {
  switch (e) {
    case Enforcement::strict: return "strict";
    case Enforcement::clamped: return "clamped";
    case Enforcement::off: return "off";
  }
  return "?";
}

void ScheduleConfig::validate() const {
  if (eta <= 0.0) throw std::invalid_argument("ScheduleConfig: eta must be > 0");
  if (base <= 1.0) throw std::invalid_argument("ScheduleConfig: base must be > 1");
  if (h_bar0 < 0) throw std::invalid_argument("ScheduleConfig: h_bar0 must be >= 0");
  if (C <= 0.0) throw std::invalid_argument("ScheduleConfig: C must be > 0");
  if (beta < 0.0) throw std::invalid_argument("ScheduleConfig: beta must be >= 0");
  if (n < 1) throw std::invalid_argument("ScheduleConfig: n must be >= 1");
  if (max_h_bar < 0 || max_h_bar > 62)
    throw std::invalid_argument("ScheduleConfig: max_h_bar must be in [0, 62]");
}

double sigma_infimum(long t, double C) {
  if (t < 0) throw std::invalid_argument("sigma_infimum: t must be >= 0");
  return C / std::log(static_cast<double>(t) + 2.0);
}

double sup_h_bar(long t, const ScheduleConfig& config) {
  const double arg = config.n * std::log(static_cast<double>(t) + 2.0) /
                     (24.0 * config.eta * config.eta * config.C);
  return 0.5 * std::log(arg) / std::log(config.base);
}

double inf_h_bar(long t, const ScheduleConfig& config) {
  return sup_h_bar(t, config) - config.beta / (static_cast<double>(t) + 2.0);
}

std::int64_t q_p_of(int h_bar, const ScheduleConfig& config) {
  if (h_bar > config.max_h_bar)
    throw LatticeOverflowError("q_p_of: h_bar " + std::to_string(h_bar) + " exceeds cap " +
                               std::to_string(config.max_h_bar));
  // exact integer powers when the schedule is integral (the common eta=1, b=2 case)
  if (config.eta == 1.0 && config.base == std::floor(config.base) && h_bar >= 0) {
    const auto b = static_cast<std::int64_t>(config.base);
    std::int64_t v = 1;
    for (int i = 0; i < h_bar; ++i) {
      if (v > (std::int64_t{1} << 62) / b)
        throw LatticeOverflowError("q_p_of: power overflows 2^62");
      v *= b;
    }
    return v;
  }
  const double x = config.eta * std::pow(config.base, static_cast<double>(h_bar));
  if (!(x < 0x1.0p62)) throw LatticeOverflowError("q_p_of: value overflows 2^62");
  const double r = std::floor(x) + ((x - std::floor(x)) >= 0.5 ? 1.0 : 0.0);
  if (r < 1.0) throw std::invalid_argument("q_p_of: rounds below 1 (h_bar too small for eta)");
  return static_cast<std::int64_t>(r);
}

double noise_floor_sigma(int n, std::int64_t q_p) {
  return std::sqrt(static_cast<double>(n) / 24.0) / static_cast<double>(q_p);
}

double noise_scale_eq8(int n, std::int64_t q_p) {
  return std::sqrt(static_cast<double>(n) / 12.0) / static_cast<double>(q_p);
}

SchedulerState check_bound(SchedulerState state, const ScheduleConfig& config) {
  state.sup_h = sup_h_bar(state.t, config);
  state.inf_h = inf_h_bar(state.t, config);
  if (config.enforcement == Enforcement::off) return state;
  bool raised = false;
  while (static_cast<double>(state.h_bar) < state.inf_h) {
    if (state.h_bar >= config.max_h_bar) {
      if (config.enforcement == Enforcement::strict)
        throw LatticeOverflowError("check_bound: required h_bar exceeds cap in strict mode");
      break;  // clamped: saturate at the cap
    }
    ++state.h_bar;
    ++state.violations;
    raised = true;
  }
  if (raised) state.q_p = q_p_of(state.h_bar, config);
  return state;
}

SchedulerState make_scheduler(const ScheduleConfig& config) {
  config.validate();
  SchedulerState s;
  s.t = 0;
  s.h_bar = config.h_bar0;
  s.q_p = q_p_of(s.h_bar, config);
  return check_bound(s, config);
}

SchedulerState advance_epoch(SchedulerState state, const ScheduleConfig& config) {
  ++state.t;
  return check_bound(state, config);
}

bool theorem_compliant(const SchedulerState& state, const ScheduleConfig& config) {
  return noise_floor_sigma(config.n, state.q_p) >= sigma_infimum(state.t, config.C);
}

}  // namespace qlattice
