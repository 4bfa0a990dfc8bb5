#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qlattice {

/// Exact rational number with reduced int64 numerator/denominator.
/// Learning rates are carried this way so lattice closure is exact: the
/// update -(p/q)*(k/Q_p) moves weight numerators by integer amounts on the
/// (1/(q*Q_p)) lattice.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den == 0) throw std::invalid_argument("Rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  bool operator==(const Rational&) const = default;

  /// Exact conversion: every finite double is p/2^k.
  static Rational from_double(double x);

  /// Accepts "p/q", decimal strings ("0.1" -> 1/10), and integers.
  static Rational parse(const std::string& text);

  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

}  // namespace qlattice
