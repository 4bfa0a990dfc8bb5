#include "qlattice/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qlattice/rng.hpp"

namespace qlattice {

DiffusionPreset diffusion_preset_from_string(const std::string& s) {
  if (s == "paper_n12") return DiffusionPreset::paper_n12;
  if (s == "theorem_n24") return DiffusionPreset::theorem_n24;
  if (s == "matched_alpha") return DiffusionPreset::matched_alpha;
  throw std::invalid_argument("unknown diffusion preset: " + s);
}

std::string to_string(DiffusionPreset p) {
  switch (p) {
    case DiffusionPreset::paper_n12: return "paper_n12";
    case DiffusionPreset::theorem_n24: return "theorem_n24";
    case DiffusionPreset::matched_alpha: return "matched_alpha";
  }
  return "?";
}

SdeSpec make_induced_sde(const Objective& objective, double alpha, const ScheduleConfig& schedule,
                         long epochs, int substeps_per_epoch, DiffusionPreset preset) {
  SdeSpec spec;
  const int n = objective.dim();
  spec.dim = n;
  spec.substeps_per_epoch = substeps_per_epoch;
  spec.epochs = epochs;
  spec.drift = [&objective, alpha, n](std::span<const double> w, std::span<double> out) {
    objective.grad(w, out);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] *= -alpha;
  };
  // precompute the Q_p path so the scale lookup is O(1) and pure
  ScheduleConfig sc = schedule;
  sc.n = n;
  auto qp_path = std::make_shared<std::vector<std::int64_t>>();
  qp_path->reserve(static_cast<std::size_t>(epochs) + 1);
  SchedulerState st = make_scheduler(sc);
  qp_path->push_back(st.q_p);
  for (long t = 0; t < epochs; ++t) {
    st = advance_epoch(st, sc);
    qp_path->push_back(st.q_p);
  }
  double factor = 0.0;
  switch (preset) {
    case DiffusionPreset::paper_n12: factor = std::sqrt(n / 12.0); break;
    case DiffusionPreset::theorem_n24: factor = std::sqrt(n / 24.0); break;
    case DiffusionPreset::matched_alpha: factor = alpha * std::sqrt(1.0 / 12.0); break;
  }
  spec.diffusion_scale = [qp_path, factor](double t) {
    auto idx = static_cast<std::size_t>(std::fmax(0.0, t));
    if (idx >= qp_path->size()) idx = qp_path->size() - 1;
    return factor / static_cast<double>((*qp_path)[idx]);
  };
  const auto dom = objective.domain();
  spec.initial = [dom, n](Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      w[static_cast<std::size_t>(i)] =
          dom.center[static_cast<std::size_t>(i)] + rng.uniform(-1.0, 1.0) * dom.radius / std::sqrt(n);
    return w;
  };
  return spec;
}

void em_step(std::span<const double> w, double t, const SdeSpec& spec,
             std::span<const double> noise, std::span<double> out) {
  const double ds = 1.0 / spec.substeps_per_epoch;
  spec.drift(w, out);
  const double scale = spec.diffusion_scale(t) * std::sqrt(ds);
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] + out[i] * ds + scale * noise[i];
}

EnsembleResult simulate_ensemble(const SdeSpec& spec, int paths, std::uint64_t seed,
                                 int summary_stride) {
  if (paths < 1) throw std::invalid_argument("simulate_ensemble: paths must be >= 1");
  if (!spec.drift || !spec.diffusion_scale || !spec.initial)
    throw std::invalid_argument("simulate_ensemble: incomplete spec");
  EnsembleResult res;
  res.requested_paths = paths;
  res.path_seeds.reserve(static_cast<std::size_t>(paths));

  const auto n = static_cast<std::size_t>(spec.dim);
  const long record_epochs = (spec.epochs + summary_stride - 1) / summary_stride + 1;
  int n_basins = 0;

  std::vector<std::vector<double>> sum(static_cast<std::size_t>(record_epochs),
                                       std::vector<double>(n, 0.0));
  auto sum_sq = sum;
  std::vector<std::vector<long>> basin_counts(static_cast<std::size_t>(record_epochs));
  std::vector<long> alive(static_cast<std::size_t>(record_epochs), 0);

  std::vector<double> w(n), next(n), noise(n);
  for (int p = 0; p < paths; ++p) {
    const std::uint64_t path_seed = mix_seed(seed, static_cast<std::uint64_t>(p));
    res.path_seeds.push_back(path_seed);
    Rng rng(path_seed);
    w = spec.initial(rng);
    bool ok = true;
    std::size_t rec_idx = 0;
    const auto record = [&](long epoch) {
      if (epoch % summary_stride != 0 && epoch != spec.epochs) return;
      if (rec_idx >= sum.size()) return;
      ++alive[rec_idx];
      for (std::size_t i = 0; i < n; ++i) {
        sum[rec_idx][i] += w[i];
        sum_sq[rec_idx][i] += w[i] * w[i];
      }
      if (spec.basin_of) {
        const int b = spec.basin_of(w);
        auto& bc = basin_counts[rec_idx];
        if (b >= static_cast<int>(bc.size())) bc.resize(static_cast<std::size_t>(b) + 1, 0);
        ++bc[static_cast<std::size_t>(b)];
        n_basins = std::max(n_basins, b + 1);
      }
      ++rec_idx;
    };
    record(0);
    for (long epoch = 0; epoch < spec.epochs && ok; ++epoch) {
      for (int s = 0; s < spec.substeps_per_epoch; ++s) {
        for (std::size_t i = 0; i < n; ++i) noise[i] = rng.normal();
        const double t = static_cast<double>(epoch) +
                         static_cast<double>(s) / spec.substeps_per_epoch;
        em_step(w, t, spec, noise, next);
        w.swap(next);
      }
      for (const double x : w)
        if (!std::isfinite(x)) {
          ok = false;
          break;
        }
      if (ok) record(epoch + 1);
    }
    if (ok) {
      res.terminal.push_back(w);
    } else {
      ++res.diverged;
    }
  }

  for (std::size_t e = 0; e < sum.size(); ++e) {
    if (alive[e] == 0) continue;
    EpochSummary s;
    s.epoch = static_cast<long>(e) * summary_stride;
    if (s.epoch > spec.epochs) s.epoch = spec.epochs;
    const auto cnt = static_cast<double>(alive[e]);
    s.mean.resize(n);
    s.variance.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.mean[i] = sum[e][i] / cnt;
      s.variance[i] = sum_sq[e][i] / cnt - s.mean[i] * s.mean[i];
    }
    if (n_basins > 0) {
      s.basin_fraction.assign(static_cast<std::size_t>(n_basins), 0.0);
      const auto& bc = basin_counts[e];
      for (std::size_t b = 0; b < bc.size(); ++b)
        s.basin_fraction[b] = static_cast<double>(bc[b]) / cnt;
    }
    res.per_epoch.push_back(std::move(s));
  }
  return res;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::fmax(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

DivergenceReport compare_optimizer_to_sde(const Objective& objective, const RunConfig& run_config,
                                          const SdeSpec& spec, int paths, std::uint64_t seed,
                                          double ks_threshold) {
  if (objective.dim() != spec.dim)
    throw std::invalid_argument("compare_optimizer_to_sde: dimension mismatch");
  const auto n = static_cast<std::size_t>(spec.dim);

  // optimizer arm: `paths` seeded runs
  std::vector<std::vector<double>> opt_terminal;
  std::vector<std::vector<double>> opt_means(static_cast<std::size_t>(run_config.epochs) + 1,
                                             std::vector<double>(n, 0.0));
  long opt_alive = 0;
  for (int p = 0; p < paths; ++p) {
    RunConfig rc = run_config;
    rc.seed = mix_seed(seed ^ 0x09717A11ULL, static_cast<std::uint64_t>(p));
    rc.trace_stride = 1;
    rc.run_id = "cmp_opt_" + std::to_string(p);
    const auto rec = run(objective, rc);
    if (rec.diverged || rec.final_weights.empty()) continue;
    opt_terminal.push_back(rec.final_weights);
    ++opt_alive;
  }

  const auto ens = simulate_ensemble(spec, paths, mix_seed(seed, 0x5DE), 1);

  DivergenceReport rep;
  rep.diffusion_preset = "custom";
  rep.ks_threshold = ks_threshold;
  rep.optimizer_paths = opt_alive;
  rep.sde_paths = static_cast<long>(ens.terminal.size());
  rep.ks_terminal.resize(n, 0.0);
  rep.optimizer_terminal_variance.assign(n, 0.0);
  rep.sde_terminal_variance.assign(n, 0.0);
  if (opt_terminal.empty() || ens.terminal.empty())
    throw std::runtime_error("compare_optimizer_to_sde: an arm has no surviving paths");

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a, b;
    a.reserve(opt_terminal.size());
    b.reserve(ens.terminal.size());
    for (const auto& row : opt_terminal) a.push_back(row[i]);
    for (const auto& row : ens.terminal) b.push_back(row[i]);
    rep.ks_terminal[i] = ks_statistic(a, b);
    rep.ks_max = std::fmax(rep.ks_max, rep.ks_terminal[i]);
    const auto var = [](const std::vector<double>& v) {
      double m = 0.0, s = 0.0;
      for (const double x : v) m += x;
      m /= static_cast<double>(v.size());
      for (const double x : v) s += (x - m) * (x - m);
      return s / static_cast<double>(v.size());
    };
    rep.optimizer_terminal_variance[i] = var(a);
    rep.sde_terminal_variance[i] = var(b);
  }
  return rep;
}

nlohmann::json EnsembleResult::to_json() const {
  nlohmann::json j;
  j["requested_paths"] = requested_paths;
  j["surviving_paths"] = terminal.size();
  j["diverged"] = diverged;
  j["path_seeds"] = path_seeds;
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& s : per_epoch) {
    nlohmann::json e;
    e["epoch"] = s.epoch;
    e["mean"] = s.mean;
    e["variance"] = s.variance;
    if (!s.basin_fraction.empty()) e["basin_fraction"] = s.basin_fraction;
    eps.push_back(std::move(e));
  }
  j["per_epoch"] = std::move(eps);
  return j;
}

void EnsembleResult::write_summary_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::size_t n_basins = 0;
  for (const auto& s : per_epoch) n_basins = std::max(n_basins, s.basin_fraction.size());
  std::fprintf(f, "epoch");
  const std::size_t dim = per_epoch.empty() ? 0 : per_epoch.front().mean.size();
  for (std::size_t i = 0; i < dim; ++i) std::fprintf(f, ",mean_%zu", i);
  for (std::size_t i = 0; i < dim; ++i) std::fprintf(f, ",var_%zu", i);
  for (std::size_t b = 0; b < n_basins; ++b) std::fprintf(f, ",basin_%zu", b);
  std::fprintf(f, "\n");
  for (const auto& s : per_epoch) {
    std::fprintf(f, "%ld", s.epoch);
    for (const double v : s.mean) std::fprintf(f, ",%.17g", v);
    for (const double v : s.variance) std::fprintf(f, ",%.17g", v);
    for (std::size_t b = 0; b < n_basins; ++b)
      std::fprintf(f, ",%.17g", b < s.basin_fraction.size() ? s.basin_fraction[b] : 0.0);
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

nlohmann::json DivergenceReport::to_json() const {
  nlohmann::json j;
  j["ks_terminal"] = ks_terminal;
  j["ks_max"] = ks_max;
  j["ks_threshold"] = ks_threshold;
  j["pass"] = pass();
  j["optimizer_terminal_variance"] = optimizer_terminal_variance;
  j["sde_terminal_variance"] = sde_terminal_variance;
  j["mean_curve_max_gap"] = mean_curve_max_gap;
  j["diffusion_preset"] = diffusion_preset;
  j["optimizer_paths"] = optimizer_paths;
  j["sde_paths"] = sde_paths;
  return j;
}

}  // namespace qlattice
