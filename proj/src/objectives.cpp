#include "qlattice/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qlattice/rng.hpp"

namespace qlattice {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

void verify_gradient(const Objective& obj, int points, double rel_tol, std::uint64_t seed) {
  const int n = obj.dim();
  Rng rng(seed);
  const auto dom = obj.domain();
  std::vector<double> w(static_cast<std::size_t>(n));
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int p = 0; p < points; ++p) {
    for (int i = 0; i < n; ++i)
      w[static_cast<std::size_t>(i)] =
          dom.center[static_cast<std::size_t>(i)] + rng.uniform(-0.7, 0.7) * dom.radius / std::sqrt(n);
    obj.grad(w, g);
    // for large n spot-check a few coordinates per point
    const int coords = n <= 8 ? n : 8;
    for (int c = 0; c < coords; ++c) {
      const int i = n <= 8 ? c : static_cast<int>(rng.uniform_int(0, n - 1));
      const double h = 1e-5 * std::fmax(1.0, std::fabs(w[static_cast<std::size_t>(i)]));
      const double keep = w[static_cast<std::size_t>(i)];
      w[static_cast<std::size_t>(i)] = keep + h;
      const double fp = obj.eval(w);
      w[static_cast<std::size_t>(i)] = keep - h;
      const double fm = obj.eval(w);
      w[static_cast<std::size_t>(i)] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = g[static_cast<std::size_t>(i)];
      const double scale = std::max({1e-6, std::fabs(fd), std::fabs(an)});
      if (std::fabs(fd - an) > rel_tol * scale)
        throw std::runtime_error("gradient check failed for " + obj.name() + " at coordinate " +
                                 std::to_string(i) + ": analytic " + std::to_string(an) +
                                 " vs finite-difference " + std::to_string(fd));
    }
  }
}

void verify_lipschitz(const Objective& obj, int samples, std::uint64_t seed) {
  const auto L = obj.lipschitz();
  if (!L) return;
  const int n = obj.dim();
  const auto dom = obj.domain();
  std::vector<double> anchor = dom.center;
  double f0 = 0.0;
  if (const auto gm = obj.global_min()) {
    anchor = gm->location;
    f0 = gm->value;
  } else {
    f0 = obj.eval(anchor);
  }
  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int s = 0; s < samples; ++s) {
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform(-1.0, 1.0);
      x[static_cast<std::size_t>(i)] = dom.center[static_cast<std::size_t>(i)] + u * dom.radius / std::sqrt(n);
    }
    double dist = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = x[static_cast<std::size_t>(i)] - anchor[static_cast<std::size_t>(i)];
      dist += d * d;
    }
    dist = std::sqrt(dist);
    norm2 = std::fabs(obj.eval(x) - f0);
    if (norm2 > *L * dist + 1e-9)
      throw std::runtime_error("Lipschitz check failed for " + obj.name() + ": |df|=" +
                               std::to_string(norm2) + " > L*d=" + std::to_string(*L * dist));
  }
}

namespace {

class Quadratic final : public Objective {
 public:
  Quadratic(int n, double c) : n_(n), c_(c) {}
  std::string name() const override { return "quadratic"; }
  int dim() const override { return n_; }
  double eval(std::span<const double> w) const override {
    double s = 0.0;
    for (const double v : w) s += v * v;
    return 0.5 * c_ * s;
  }
  void grad(std::span<const double> w, std::span<double> out) const override {
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = c_ * w[i];
  }
  Domain domain() const override { return {std::vector<double>(static_cast<std::size_t>(n_), 0.0), 10.0}; }
  std::optional<double> lipschitz() const override { return 0.5 * c_ * 10.0; }
  std::optional<GlobalMin> global_min() const override {
    return GlobalMin{std::vector<double>(static_cast<std::size_t>(n_), 0.0), 0.0};
  }

 private:
  int n_;
  double c_;
};

// f(x) = x^4 - 8 x^2 + 3 x; two wells, the negative one strictly lower.
class DoubleWell1d final : public Objective {
 public:
  DoubleWell1d() {
    // global minimum: the negative root of 4x^3 - 16x + 3, by bisection
    double lo = -3.0, hi = -1.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (gprime(mid) < 0.0 ? lo : hi) = mid;
    }
    xmin_ = 0.5 * (lo + hi);
  }
  std::string name() const override { return "double_well_1d"; }
  int dim() const override { return 1; }
  double eval(std::span<const double> w) const override {
    const double x = w[0];
    return ((x * x - 8.0) * x + 3.0) * x;  // x^4 - 8x^2 + 3x
  }
  void grad(std::span<const double> w, std::span<double> out) const override {
    const double x = w[0];
    out[0] = 4.0 * x * x * x - 16.0 * x + 3.0;
  }
  Domain domain() const override { return {{-0.1}, 3.1}; }
  std::optional<double> lipschitz() const override { return lipschitz_; }
  std::optional<GlobalMin> global_min() const override {
    std::vector<double> loc{xmin_};
    return GlobalMin{loc, eval(loc)};
  }
  void set_lipschitz(double L) { lipschitz_ = L; }

 private:
  static double gprime(double x) { return 4.0 * x * x * x - 16.0 * x + 3.0; }
  double xmin_ = 0.0;
  double lipschitz_ = 0.0;
};

class Rastrigin final : public Objective {
 public:
  explicit Rastrigin(int n) : n_(n) {}
  std::string name() const override { return "rastrigin"; }
  int dim() const override { return n_; }
  double eval(std::span<const double> w) const override {
    double s = 10.0 * n_;
    for (const double x : w) s += x * x - 10.0 * std::cos(kTwoPi * x);
    return s;
  }
  void grad(std::span<const double> w, std::span<double> out) const override {
    for (std::size_t i = 0; i < w.size(); ++i)
      out[i] = 2.0 * w[i] + 10.0 * kTwoPi * std::sin(kTwoPi * w[i]);
  }
  Domain domain() const override {
    return {std::vector<double>(static_cast<std::size_t>(n_), 0.0), 5.12};
  }
  std::optional<double> lipschitz() const override {
    // analytic bound on the ball: ||grad||_2 <= sqrt(n) * (2*5.12 + 20*pi)
    return std::sqrt(static_cast<double>(n_)) * (2.0 * 5.12 + 20.0 * kPi);
  }
  std::optional<GlobalMin> global_min() const override {
    return GlobalMin{std::vector<double>(static_cast<std::size_t>(n_), 0.0), 0.0};
  }

 private:
  int n_;
};

class Ackley final : public Objective {
 public:
  explicit Ackley(int n) : n_(n) {}
  std::string name() const override { return "ackley"; }
  int dim() const override { return n_; }
  double eval(std::span<const double> w) const override {
    double sq = 0.0, cs = 0.0;
    for (const double x : w) {
      sq += x * x;
      cs += std::cos(kTwoPi * x);
    }
    const double n = static_cast<double>(n_);
    return -20.0 * std::exp(-0.2 * std::sqrt(sq / n)) - std::exp(cs / n) + 20.0 + std::exp(1.0);
  }
  void grad(std::span<const double> w, std::span<double> out) const override {
    double sq = 0.0, cs = 0.0;
    for (const double x : w) {
      sq += x * x;
      cs += std::cos(kTwoPi * x);
    }
    const double n = static_cast<double>(n_);
    const double r = std::sqrt(sq / n);
    const double e1 = std::exp(-0.2 * r);
    const double e2 = std::exp(cs / n);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double dr = r > 0.0 ? 4.0 * e1 * w[i] / (n * r) : 0.0;
      out[i] = dr + kTwoPi / n * e2 * std::sin(kTwoPi * w[i]);
    }
  }
  Domain domain() const override {
    return {std::vector<double>(static_cast<std::size_t>(n_), 0.0), 5.0};
  }
  std::optional<double> lipschitz() const override { return lipschitz_; }
  std::optional<GlobalMin> global_min() const override {
    return GlobalMin{std::vector<double>(static_cast<std::size_t>(n_), 0.0), 0.0};
  }
  void set_lipschitz(double L) { lipschitz_ = L; }

 private:
  int n_;
  double lipschitz_ = 0.0;
};

// max |f(x)-f(x*)| / ||x-x*|| over a dense grid; only for dim <= 2
double grid_lipschitz(const Objective& obj, int per_axis) {
  const auto dom = obj.domain();
  const int n = obj.dim();
  std::vector<double> anchor = dom.center;
  double f0 = obj.eval(anchor);
  if (const auto gm = obj.global_min()) {
    anchor = gm->location;
    f0 = gm->value;
  }
  double worst = 0.0;
  std::vector<double> x(static_cast<std::size_t>(n));
  const auto probe = [&](std::span<const double> pt) {
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dd = pt[static_cast<std::size_t>(i)] - anchor[static_cast<std::size_t>(i)];
      d += dd * dd;
    }
    d = std::sqrt(d);
    if (d < 1e-9) return;
    worst = std::fmax(worst, std::fabs(obj.eval(pt) - f0) / d);
  };
  if (n == 1) {
    for (int i = 0; i <= per_axis; ++i) {
      x[0] = dom.center[0] - dom.radius + 2.0 * dom.radius * i / per_axis;
      probe(x);
    }
  } else {
    for (int i = 0; i <= per_axis; ++i)
      for (int j = 0; j <= per_axis; ++j) {
        x[0] = dom.center[0] - dom.radius + 2.0 * dom.radius * i / per_axis;
        x[1] = dom.center[1] - dom.radius + 2.0 * dom.radius * j / per_axis;
        probe(x);
      }
  }
  return worst * 1.05;  // headroom for off-grid points
}

}  // namespace

std::unique_ptr<Objective> make_quadratic(int n, double curvature, bool self_test) {
  if (n < 1) throw std::invalid_argument("make_quadratic: n must be >= 1");
  if (curvature <= 0.0) throw std::invalid_argument("make_quadratic: curvature must be > 0");
  auto obj = std::make_unique<Quadratic>(n, curvature);
  if (self_test) verify_gradient(*obj, 100, 1e-5, 42);
  return obj;
}

std::unique_ptr<Objective> make_double_well_1d(bool self_test) {
  auto obj = std::make_unique<DoubleWell1d>();
  obj->set_lipschitz(grid_lipschitz(*obj, 4000));
  if (self_test) {
    verify_gradient(*obj, 100, 1e-5, 43);
    verify_lipschitz(*obj, 10000, 43);
  }
  return obj;
}

std::unique_ptr<Objective> make_rastrigin(int n, bool self_test) {
  if (n < 1) throw std::invalid_argument("make_rastrigin: n must be >= 1");
  auto obj = std::make_unique<Rastrigin>(n);
  if (self_test) {
    verify_gradient(*obj, 100, 1e-5, 44);
    verify_lipschitz(*obj, 10000, 44);
  }
  return obj;
}

std::unique_ptr<Objective> make_ackley(int n, bool self_test) {
  if (n < 1) throw std::invalid_argument("make_ackley: n must be >= 1");
  auto obj = std::make_unique<Ackley>(n);
  if (n <= 2) obj->set_lipschitz(grid_lipschitz(*obj, 2000));
  if (self_test) {
    verify_gradient(*obj, 100, 1e-5, 45);
    verify_lipschitz(*obj, 10000, 45);
  }
  return obj;
}

BruteForceResult brute_force_min(const Objective& obj, int grid_points_per_axis) {
  const int n = obj.dim();
  if (n > 2)
    throw std::invalid_argument("brute_force_min: refuses dim > 2 (got " + std::to_string(n) + ")");
  if (grid_points_per_axis < 3) throw std::invalid_argument("brute_force_min: grid too small");
  const auto dom = obj.domain();
  std::vector<double> lo(static_cast<std::size_t>(n)), hi(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    lo[static_cast<std::size_t>(i)] = dom.center[static_cast<std::size_t>(i)] - dom.radius;
    hi[static_cast<std::size_t>(i)] = dom.center[static_cast<std::size_t>(i)] + dom.radius;
  }
  BruteForceResult best;
  best.location.assign(static_cast<std::size_t>(n), 0.0);
  best.value = std::numeric_limits<double>::infinity();
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int round = 0; round < 4; ++round) {
    const auto scan = [&](auto&& self, int axis) -> void {
      if (axis == n) {
        const double f = obj.eval(x);
        if (f < best.value) {
          best.value = f;
          best.location.assign(x.begin(), x.end());
        }
        return;
      }
      const auto a = static_cast<std::size_t>(axis);
      for (int i = 0; i <= grid_points_per_axis; ++i) {
        x[a] = lo[a] + (hi[a] - lo[a]) * i / grid_points_per_axis;
        self(self, axis + 1);
      }
    };
    scan(scan, 0);
    // shrink the box around the incumbent
    for (int i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(i);
      const double w = (hi[a] - lo[a]) / grid_points_per_axis * 2.0;
      lo[a] = best.location[a] - w;
      hi[a] = best.location[a] + w;
    }
  }
  return best;
}

std::optional<double> find_1d_barrier(const Objective& obj, int grid) {
  if (obj.dim() != 1) return std::nullopt;
  const auto dom = obj.domain();
  const double lo = dom.center[0] - dom.radius;
  const double hi = dom.center[0] + dom.radius;
  std::vector<double> x(1), g(1);
  // gradient sign changes - -> + locate minima; refine each by bisection
  std::vector<double> minima;
  double prev_x = lo, prev_g = 0.0;
  x[0] = lo;
  obj.grad(x, g);
  prev_g = g[0];
  for (int i = 1; i <= grid; ++i) {
    x[0] = lo + (hi - lo) * i / grid;
    obj.grad(x, g);
    if (prev_g < 0.0 && g[0] >= 0.0) {
      double a = prev_x, b = x[0];
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (a + b);
        std::vector<double> xm{mid}, gm(1);
        obj.grad(xm, gm);
        (gm[0] < 0.0 ? a : b) = mid;
      }
      minima.push_back(0.5 * (a + b));
    }
    prev_x = x[0];
    prev_g = g[0];
  }
  if (minima.size() < 2) return std::nullopt;
  // the two lowest minima
  std::sort(minima.begin(), minima.end(), [&](double a, double b) {
    std::vector<double> xa{a}, xb{b};
    return obj.eval(xa) < obj.eval(xb);
  });
  double a = std::min(minima[0], minima[1]);
  double b = std::max(minima[0], minima[1]);
  double best_x = a, best_f = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    x[0] = a + (b - a) * i / grid;
    const double f = obj.eval(x);
    if (f > best_f) {
      best_f = f;
      best_x = x[0];
    }
  }
  return best_x;
}

}  // namespace qlattice
