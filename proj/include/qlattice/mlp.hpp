#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qlattice/objectives.hpp"

namespace qlattice {

/// Synthetic 2-D classification data: per class, Gaussian blobs in an XOR
/// layout (class 0 on the main diagonal corners, class 1 on the anti-diagonal),
/// so a linear model stays at chance and the hidden layers matter.
struct MlpTaskConfig {
  std::vector<int> layers{2, 16, 16, 2};  // widths; first = input, last = classes
  int n_train = 256;
  int n_test = 1024;
  double spread = 0.5;  // blob standard deviation
  int batch = 32;

  void validate() const;
};

struct Dataset {
  std::vector<double> x;  // row-major, n x input_dim
  std::vector<int> y;
  int rows = 0;
  int cols = 0;
};

/// Fully connected tanh network with softmax cross-entropy loss over the
/// flattened parameter vector [W1, b1, W2, b2, ...]. `eval`/`grad` run over
/// the full training split; batch_* run over mini-batches drawn from a
/// permutation that is a pure function of (run_seed, epoch).
class MlpObjective : public Objective {
 public:
  MlpObjective(MlpTaskConfig config, std::uint64_t seed);

  std::string name() const override { return "mlp"; }
  int dim() const override { return n_params_; }
  double eval(std::span<const double> w) const override;
  void grad(std::span<const double> w, std::span<double> out) const override;

  int batches_per_epoch() const override;
  double batch_eval(std::span<const double> w, std::uint64_t run_seed, long epoch,
                    int batch) const override;
  void batch_grad(std::span<const double> w, std::uint64_t run_seed, long epoch, int batch,
                  std::span<double> out) const override;
  double batch_eval_grad(std::span<const double> w, std::uint64_t run_seed, long epoch, int batch,
                         std::span<double> out) const override;

  Domain domain() const override;
  std::optional<double> accuracy(std::span<const double> w, Split split) const override;

  /// Glorot-uniform initial weights, deterministic in (task seed, run seed).
  std::vector<double> initial_weights(std::uint64_t run_seed) const;

  const Dataset& data(Split split) const { return split == Split::train ? train_ : test_; }
  const MlpTaskConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<std::size_t> batch_indices(std::uint64_t run_seed, long epoch, int batch) const;
  double loss_and_grad(std::span<const double> w, std::span<const std::size_t> idx,
                       std::span<double> grad_out, bool want_grad) const;

  MlpTaskConfig config_;
  std::uint64_t seed_;
  int n_params_ = 0;
  Dataset train_, test_;
};

std::unique_ptr<MlpObjective> make_mlp_task(const MlpTaskConfig& config, std::uint64_t seed,
                                            bool self_test = true);

}  // namespace qlattice
