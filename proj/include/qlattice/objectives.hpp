#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qlattice {

enum class Split { train, test };

/// A differentiable objective over R^n with the domain metadata of the
/// Lipschitz-ball contract. Immutable after construction and callable from
/// any thread; stochastic (mini-batch) evaluation is addressed positionally
/// by (run_seed, epoch, batch) so each run owns its own cursor.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual double eval(std::span<const double> w) const = 0;
  virtual void grad(std::span<const double> w, std::span<double> out) const = 0;

  virtual int batches_per_epoch() const { return 1; }
  virtual double batch_eval(std::span<const double> w, std::uint64_t /*run_seed*/,
                            long /*epoch*/, int /*batch*/) const {
    return eval(w);
  }
  virtual void batch_grad(std::span<const double> w, std::uint64_t /*run_seed*/, long /*epoch*/,
                          int /*batch*/, std::span<double> out) const {
    grad(w, out);
  }
  /// Loss and gradient in one pass when the objective can share the forward work.
  virtual double batch_eval_grad(std::span<const double> w, std::uint64_t run_seed, long epoch,
                                 int batch, std::span<double> out) const {
    batch_grad(w, run_seed, epoch, batch, out);
    return batch_eval(w, run_seed, epoch, batch);
  }

  struct Domain {
    std::vector<double> center;
    double radius = 0.0;
  };
  virtual Domain domain() const = 0;

  virtual std::optional<double> lipschitz() const { return std::nullopt; }

  struct GlobalMin {
    std::vector<double> location;
    double value = 0.0;
  };
  virtual std::optional<GlobalMin> global_min() const { return std::nullopt; }

  /// Classification accuracy in percent, when the objective is a task.
  virtual std::optional<double> accuracy(std::span<const double> /*w*/, Split /*split*/) const {
    return std::nullopt;
  }

  std::vector<double> grad_vec(std::span<const double> w) const {
    std::vector<double> g(static_cast<std::size_t>(dim()));
    grad(w, g);
    return g;
  }
};

/// Central-difference consistency check at `points` random points in the
/// domain ball; throws std::runtime_error on disagreement.
void verify_gradient(const Objective& obj, int points, double rel_tol, std::uint64_t seed);

/// Samples the ball and checks |f(x) - f(x*)| <= L * ||x - x*|| when the
/// objective declares a Lipschitz constant. x* is the global minimum when
/// known, otherwise the ball center.
void verify_lipschitz(const Objective& obj, int samples, std::uint64_t seed);

// Factories run verify_gradient on construction unless self_test is false.
std::unique_ptr<Objective> make_quadratic(int n, double curvature, bool self_test = true);
std::unique_ptr<Objective> make_double_well_1d(bool self_test = true);
std::unique_ptr<Objective> make_rastrigin(int n, bool self_test = true);
std::unique_ptr<Objective> make_ackley(int n, bool self_test = true);

struct BruteForceResult {
  std::vector<double> location;
  double value = 0.0;
};

/// Dense grid scan over the domain's bounding box plus shrinking local
/// refinement. Refuses dim > 2.
BruteForceResult brute_force_min(const Objective& obj, int grid_points_per_axis);

/// For a 1-D objective with two minima: the location of the barrier (the
/// objective's maximizer strictly between the two lowest minima). Empty when
/// fewer than two minima are found on the domain.
std::optional<double> find_1d_barrier(const Objective& obj, int grid = 8192);

}  // namespace qlattice
