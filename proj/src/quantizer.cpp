#include "qlattice/quantizer.hpp"

#include <cmath>

namespace qlattice {

ScalarQuant quantize_scalar(double x, QuantLevel level) {
  if (!std::isfinite(x)) throw std::invalid_argument("quantize_scalar: non-finite input");
  const double qp = static_cast<double>(level.q_p);
  const double y = qp * x;
  if (std::fabs(y) >= 0x1.0p62) throw std::invalid_argument("quantize_scalar: q_p*x overflows");
  const double k = round_half_up(y);
  // k - y is exact (both within one unit of each other, |y| < 2^62)
  return {k / qp, k - y};
}

std::pair<LatticeVector, QuantError> quantize_vector(std::span<const double> x, QuantLevel level) {
  LatticeVector out;
  out.level = level;
  out.values.reserve(x.size());
  QuantError err;
  err.errors.reserve(x.size());
  for (const double v : x) {
    const auto [xq, e] = quantize_scalar(v, level);
    out.values.push_back(xq);
    err.errors.push_back(e);
  }
  return {std::move(out), std::move(err)};
}

std::pair<std::vector<std::int64_t>, QuantError> quantize_integer_grid(std::span<const double> x) {
  std::vector<std::int64_t> ints;
  ints.reserve(x.size());
  QuantError err;
  err.errors.reserve(x.size());
  for (const double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize_integer_grid: non-finite input");
    if (std::fabs(v) >= 0x1.0p62) throw std::invalid_argument("quantize_integer_grid: overflow");
    const double k = round_half_up(v);
    ints.push_back(static_cast<std::int64_t>(k));
    err.errors.push_back(k - v);
  }
  return {std::move(ints), std::move(err)};
}

double error_covariance_trace(int n, QuantLevel level) {
  if (n < 1) throw std::invalid_argument("error_covariance_trace: n must be >= 1");
  const double qp = static_cast<double>(level.q_p);
  return static_cast<double>(n) / (12.0 * qp * qp);
}

double lattice_residual(std::span<const double> values, QuantLevel level) {
  const double qp = static_cast<double>(level.q_p);
  double worst = 0.0;
  for (const double v : values) {
    const double y = v * qp;
    const double r = std::fabs(y - std::nearbyint(y));
    if (r > worst) worst = r;
  }
  return worst;
}

bool on_lattice(std::span<const double> values, QuantLevel level) {
  const double qp = static_cast<double>(level.q_p);
  for (const double v : values) {
    const double y = v * qp;
    const double scale = std::fmax(1.0, std::fabs(y));
    if (std::fabs(y - std::nearbyint(y)) > 4.0 * scale * 0x1.0p-52) return false;
  }
  return true;
}

}  // namespace qlattice
