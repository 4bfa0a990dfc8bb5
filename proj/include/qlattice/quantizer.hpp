#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qlattice {

inline constexpr std::int64_t kMaxQuantLevel = std::int64_t{1} << 62;

/// Round-half-up: floor(y + 0.5) in exact arithmetic, computed without the
/// +0.5 double-rounding (fl(y+0.5) can cross an integer for y one ulp below
/// a half-integer, which would push the error outside [-0.5, 0.5]).
inline double round_half_up(double y) {
  const double f = std::floor(y);
  return (y - f >= 0.5) ? f + 1.0 : f;
}

inline std::int64_t round_half_up_i64(double y) {
  return static_cast<std::int64_t>(round_half_up(y));
}

/// Lattice denominator Q_p; quantized values live on (1/q_p)*Z.
struct QuantLevel {
  std::int64_t q_p = 1;

  QuantLevel() = default;
  explicit QuantLevel(std::int64_t q) : q_p(q) {
    if (q < 1) throw std::invalid_argument("QuantLevel: q_p must be >= 1");
    if (q > kMaxQuantLevel) throw std::invalid_argument("QuantLevel: q_p exceeds 2^62");
  }
  double spacing() const { return 1.0 / static_cast<double>(q_p); }
  bool operator==(const QuantLevel&) const = default;
};

/// Quantization error vector; componentwise in [-0.5, 0.5] with the
/// convention eps = q_p * (x_quantized - x).
struct QuantError {
  std::vector<double> errors;
};

/// A vector guaranteed on the (1/q_p) lattice.
struct LatticeVector {
  std::vector<double> values;
  QuantLevel level;
};

struct ScalarQuant {
  double value = 0.0;  // on the lattice
  double error = 0.0;  // eps = q_p * (value - x), in [-0.5, 0.5]
};

ScalarQuant quantize_scalar(double x, QuantLevel level);

std::pair<LatticeVector, QuantError> quantize_vector(std::span<const double> x, QuantLevel level);

/// Quantization at level 1: rounds to the integer grid. This is the reading
/// of (Q_p*h)^Q used by the learning equation, so that h^Q = round(Q_p*h)/Q_p
/// stays on the (1/Q_p) lattice.
std::pair<std::vector<std::int64_t>, QuantError> quantize_integer_grid(std::span<const double> x);

/// n/(12*q_p^2): the white-noise-hypothesis value of E|eps/Q_p|^2 for an
/// n-dimensional error vector.
double error_covariance_trace(int n, QuantLevel level);

/// Worst |v*q_p - round(v*q_p)| over the components; 0 (to a few ulps) iff
/// the vector is on the lattice.
double lattice_residual(std::span<const double> values, QuantLevel level);
bool on_lattice(std::span<const double> values, QuantLevel level);

}  // namespace qlattice
