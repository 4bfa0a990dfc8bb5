#include "qlattice/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qlattice/rng.hpp"

namespace qlattice {

void MlpTaskConfig::validate() const {
  if (layers.size() < 2) throw std::invalid_argument("MlpTaskConfig: need at least 2 layers");
  for (const int w : layers)
    if (w < 1) throw std::invalid_argument("MlpTaskConfig: layer widths must be >= 1");
  if (layers.front() != 2) throw std::invalid_argument("MlpTaskConfig: generator produces 2-D inputs");
  if (layers.back() != 2) throw std::invalid_argument("MlpTaskConfig: generator produces 2 classes");
  if (n_train < 2 || n_test < 2) throw std::invalid_argument("MlpTaskConfig: dataset too small");
  if (batch < 1) throw std::invalid_argument("MlpTaskConfig: batch must be >= 1");
  if (spread <= 0.0) throw std::invalid_argument("MlpTaskConfig: spread must be > 0");
}

namespace {

Dataset generate(std::uint64_t seed, int rows, double spread) {
  Dataset d;
  d.rows = rows;
  d.cols = 2;
  d.x.resize(static_cast<std::size_t>(rows) * 2);
  d.y.resize(static_cast<std::size_t>(rows));
  Rng rng(seed);
  for (int i = 0; i < rows; ++i) {
    const int cls = static_cast<int>(rng.uniform_int(0, 1));
    const int quad = static_cast<int>(rng.uniform_int(0, 1));
    const double cx = quad ? 1.0 : -1.0;
    const double cy = cls == 0 ? cx : -cx;
    d.x[static_cast<std::size_t>(i) * 2 + 0] = cx + spread * rng.normal();
    d.x[static_cast<std::size_t>(i) * 2 + 1] = cy + spread * rng.normal();
    d.y[static_cast<std::size_t>(i)] = cls;
  }
  return d;
}

}  // namespace

MlpObjective::MlpObjective(MlpTaskConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  n_params_ = 0;
  for (std::size_t l = 0; l + 1 < config_.layers.size(); ++l)
    n_params_ += (config_.layers[l] + 1) * config_.layers[l + 1];
  train_ = generate(mix_seed(seed_, 1), config_.n_train, config_.spread);
  test_ = generate(mix_seed(seed_, 2), config_.n_test, config_.spread);
}

int MlpObjective::batches_per_epoch() const {
  return (config_.n_train + config_.batch - 1) / config_.batch;
}

std::vector<std::size_t> MlpObjective::batch_indices(std::uint64_t run_seed, long epoch,
                                                     int batch) const {
  const auto n = static_cast<std::size_t>(train_.rows);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  // Fisher-Yates with a stream keyed by (task seed, run seed, epoch)
  Rng rng(mix_seed(mix_seed(seed_, run_seed), static_cast<std::uint64_t>(epoch) + 17));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(perm[i], perm[j]);
  }
  const auto b = static_cast<std::size_t>(batch);
  const auto bs = static_cast<std::size_t>(config_.batch);
  const auto lo = b * bs;
  const auto hi = std::min(n, lo + bs);
  if (lo >= n) throw std::out_of_range("MlpObjective: batch index out of range");
  return {perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi)};
}

double MlpObjective::loss_and_grad(std::span<const double> w, std::span<const std::size_t> idx,
                                   std::span<double> grad_out, bool want_grad) const {
  if (static_cast<int>(w.size()) != n_params_)
    throw std::invalid_argument("MlpObjective: weight vector has wrong dimension");
  const auto& L = config_.layers;
  const auto n_layers = L.size() - 1;
  const auto m = idx.size();

  // activations per layer (batch-major)
  std::vector<std::vector<double>> act(n_layers + 1);
  act[0].resize(m * 2);
  for (std::size_t r = 0; r < m; ++r) {
    act[0][r * 2 + 0] = train_.x[idx[r] * 2 + 0];
    act[0][r * 2 + 1] = train_.x[idx[r] * 2 + 1];
  }

  // forward
  std::size_t off = 0;
  std::vector<std::size_t> w_off(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto fi = static_cast<std::size_t>(L[l]);
    const auto fo = static_cast<std::size_t>(L[l + 1]);
    w_off[l] = off;
    const double* W = w.data() + off;
    const double* b = W + fi * fo;
    act[l + 1].assign(m * fo, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const double* in = act[l].data() + r * fi;
      double* out = act[l + 1].data() + r * fo;
      for (std::size_t j = 0; j < fo; ++j) out[j] = b[j];
      for (std::size_t i = 0; i < fi; ++i) {
        const double v = in[i];
        const double* Wrow = W + i * fo;
        for (std::size_t j = 0; j < fo; ++j) out[j] += v * Wrow[j];
      }
      if (l + 1 < n_layers) {
        for (std::size_t j = 0; j < fo; ++j) out[j] = std::tanh(out[j]);
      }
    }
    off += (fi + 1) * fo;
  }

  // softmax cross-entropy on the logits
  const auto classes = static_cast<std::size_t>(L.back());
  std::vector<double> delta(m * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    double* z = act[n_layers].data() + r * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      delta[r * classes + j] = std::exp(z[j] - zmax);
      sum += delta[r * classes + j];
    }
    const auto label = static_cast<std::size_t>(train_.y[idx[r]]);
    const double p = delta[r * classes + label] / sum;
    loss -= std::log(std::fmax(p, 1e-300));
    if (want_grad) {
      for (std::size_t j = 0; j < classes; ++j)
        delta[r * classes + j] = (delta[r * classes + j] / sum - (j == label ? 1.0 : 0.0)) /
                                 static_cast<double>(m);
    }
  }
  loss /= static_cast<double>(m);
  if (!std::isfinite(loss))
    throw std::runtime_error("MlpObjective: non-finite loss (weights likely diverged; |w|_max=" +
                             std::to_string(*std::max_element(w.begin(), w.end())) + ")");
  if (!want_grad) return loss;

  // backward
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  std::vector<double> cur = std::move(delta);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto fi = static_cast<std::size_t>(L[l]);
    const auto fo = static_cast<std::size_t>(L[l + 1]);
    const double* W = w.data() + w_off[l];
    double* gW = grad_out.data() + w_off[l];
    double* gb = gW + fi * fo;
    std::vector<double> prev;
    if (l > 0) prev.assign(m * fi, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const double* in = act[l].data() + r * fi;
      const double* d = cur.data() + r * fo;
      for (std::size_t j = 0; j < fo; ++j) gb[j] += d[j];
      for (std::size_t i = 0; i < fi; ++i) {
        double* gWrow = gW + i * fo;
        const double v = in[i];
        for (std::size_t j = 0; j < fo; ++j) gWrow[j] += v * d[j];
      }
      if (l > 0) {
        double* p = prev.data() + r * fi;
        for (std::size_t i = 0; i < fi; ++i) {
          const double* Wrow = W + i * fo;
          double s = 0.0;
          for (std::size_t j = 0; j < fo; ++j) s += Wrow[j] * d[j];
          p[i] = s * (1.0 - in[i] * in[i]);  // tanh'
        }
      }
    }
    cur = std::move(prev);
  }
  return loss;
}

double MlpObjective::eval(std::span<const double> w) const {
  std::vector<std::size_t> all(static_cast<std::size_t>(train_.rows));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_grad(w, all, {}, false);
}

void MlpObjective::grad(std::span<const double> w, std::span<double> out) const {
  std::vector<std::size_t> all(static_cast<std::size_t>(train_.rows));
  std::iota(all.begin(), all.end(), std::size_t{0});
  loss_and_grad(w, all, out, true);
}

double MlpObjective::batch_eval(std::span<const double> w, std::uint64_t run_seed, long epoch,
                                int batch) const {
  const auto idx = batch_indices(run_seed, epoch, batch);
  return loss_and_grad(w, idx, {}, false);
}

void MlpObjective::batch_grad(std::span<const double> w, std::uint64_t run_seed, long epoch,
                              int batch, std::span<double> out) const {
  const auto idx = batch_indices(run_seed, epoch, batch);
  loss_and_grad(w, idx, out, true);
}

double MlpObjective::batch_eval_grad(std::span<const double> w, std::uint64_t run_seed, long epoch,
                                     int batch, std::span<double> out) const {
  const auto idx = batch_indices(run_seed, epoch, batch);
  return loss_and_grad(w, idx, out, true);
}

Objective::Domain MlpObjective::domain() const {
  return {std::vector<double>(static_cast<std::size_t>(n_params_), 0.0), 16.0};
}

std::optional<double> MlpObjective::accuracy(std::span<const double> w, Split split) const {
  const auto& d = data(split);
  const auto& L = config_.layers;
  const auto n_layers = L.size() - 1;
  std::size_t correct = 0;
  std::vector<double> buf_a, buf_b;
  for (int r = 0; r < d.rows; ++r) {
    buf_a.assign(d.x.begin() + static_cast<std::ptrdiff_t>(r) * 2,
                 d.x.begin() + static_cast<std::ptrdiff_t>(r) * 2 + 2);
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto fi = static_cast<std::size_t>(L[l]);
      const auto fo = static_cast<std::size_t>(L[l + 1]);
      const double* W = w.data() + off;
      const double* b = W + fi * fo;
      buf_b.assign(fo, 0.0);
      for (std::size_t j = 0; j < fo; ++j) buf_b[j] = b[j];
      for (std::size_t i = 0; i < fi; ++i)
        for (std::size_t j = 0; j < fo; ++j) buf_b[j] += buf_a[i] * W[i * fo + j];
      if (l + 1 < n_layers)
        for (double& v : buf_b) v = std::tanh(v);
      buf_a.swap(buf_b);
      off += (fi + 1) * fo;
    }
    const auto pred = std::distance(buf_a.begin(), std::max_element(buf_a.begin(), buf_a.end()));
    if (static_cast<int>(pred) == d.y[static_cast<std::size_t>(r)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(d.rows);
}

std::vector<double> MlpObjective::initial_weights(std::uint64_t run_seed) const {
  std::vector<double> w(static_cast<std::size_t>(n_params_));
  Rng rng(mix_seed(mix_seed(seed_, 0xA11CE), run_seed));
  std::size_t off = 0;
  const auto& L = config_.layers;
  for (std::size_t l = 0; l + 1 < L.size(); ++l) {
    const auto fi = static_cast<std::size_t>(L[l]);
    const auto fo = static_cast<std::size_t>(L[l + 1]);
    const double s = std::sqrt(6.0 / static_cast<double>(fi + fo));
    for (std::size_t i = 0; i < fi * fo; ++i) w[off + i] = rng.uniform(-s, s);
    off += fi * fo;
    for (std::size_t j = 0; j < fo; ++j) w[off + j] = 0.0;
    off += fo;
  }
  return w;
}

std::unique_ptr<MlpObjective> make_mlp_task(const MlpTaskConfig& config, std::uint64_t seed,
                                            bool self_test) {
  auto obj = std::make_unique<MlpObjective>(config, seed);
  if (self_test) {
    // spot-check 20 coordinates of the full-batch gradient at one random point
    const auto w = obj->initial_weights(1);
    auto g = obj->grad_vec(w);
    Rng rng(mix_seed(seed, 0xFD));
    auto wp = w;
    for (int c = 0; c < 20; ++c) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, obj->dim() - 1));
      const double h = 1e-5;
      wp[i] = w[i] + h;
      const double fp = obj->eval(wp);
      wp[i] = w[i] - h;
      const double fm = obj->eval(wp);
      wp[i] = w[i];
      const double fd = (fp - fm) / (2.0 * h);
      const double scale = std::max({1e-4, std::fabs(fd), std::fabs(g[i])});
      if (std::fabs(fd - g[i]) > 1e-4 * scale)
        throw std::runtime_error("mlp gradient self-test failed at coordinate " + std::to_string(i));
    }
  }
  return obj;
}

}  // namespace qlattice
