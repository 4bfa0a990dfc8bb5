#include "qlattice/rational.hpp"

#include <cmath>
#include <cstdlib>

namespace qlattice {

Rational Rational::from_double(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("Rational::from_double: non-finite");
  if (x == 0.0) return {0, 1};
  int exp = 0;
  double m = std::frexp(x, &exp);  // x = m * 2^exp, |m| in [0.5, 1)
  // scale mantissa to an integer (53 bits at most)
  while (m != std::floor(m)) {
    m *= 2.0;
    --exp;
  }
  auto num = static_cast<std::int64_t>(m);
  std::int64_t den = 1;
  if (exp > 0) {
    if (exp > 9) throw std::invalid_argument("Rational::from_double: value too large");
    num <<= exp;
  } else if (exp < 0) {
    if (exp < -62) {
      // far subnormal-ish scales do not occur for learning rates; reject
      throw std::invalid_argument("Rational::from_double: denominator exceeds 2^62");
    }
    den <<= -exp;
  }
  return {num, den};
}

Rational Rational::parse(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("Rational::parse: empty string");
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const std::int64_t p = std::stoll(text.substr(0, slash));
    const std::int64_t q = std::stoll(text.substr(slash + 1));
    return {p, q};
  }
  const auto dot = text.find('.');
  if (dot == std::string::npos) return {std::stoll(text), 1};
  const std::string ip = text.substr(0, dot);
  const std::string fp = text.substr(dot + 1);
  if (fp.size() > 18) throw std::invalid_argument("Rational::parse: too many decimals");
  std::int64_t den = 1;
  for (std::size_t i = 0; i < fp.size(); ++i) den *= 10;
  const bool neg = !ip.empty() && ip[0] == '-';
  const std::int64_t whole = ip.empty() || ip == "-" ? 0 : std::llabs(std::stoll(ip));
  const std::int64_t frac = fp.empty() ? 0 : std::stoll(fp);
  std::int64_t num = whole * den + frac;
  return {neg ? -num : num, den};
}

}  // namespace qlattice
