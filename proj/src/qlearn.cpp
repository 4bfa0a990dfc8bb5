#include "qlattice/qlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qlattice/mlp.hpp"
#include "qlattice/rng.hpp"

namespace qlattice {

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "sgd") return Algorithm::sgd;
  if (s == "adam") return Algorithm::adam;
  throw std::invalid_argument("unknown algorithm: " + s);
}

std::string to_string(Algorithm a) { return a == Algorithm::sgd ? "sgd" : "adam"; }

DirectionalDerivative::DirectionalDerivative(Algorithm kind, int dim, AdamParams params)
    : kind_(kind), params_(params) {
  if (dim < 1) throw std::invalid_argument("DirectionalDerivative: dim must be >= 1");
  if (kind_ == Algorithm::adam) {
    if (params_.beta1 <= 0.0 || params_.beta1 >= 1.0 || params_.beta2 <= 0.0 || params_.beta2 >= 1.0)
      throw std::invalid_argument("DirectionalDerivative: betas must be in (0,1)");
    m_.assign(static_cast<std::size_t>(dim), 0.0);
    v_.assign(static_cast<std::size_t>(dim), 0.0);
  }
}

std::vector<double> direction_sgd(std::span<const double> grad) {
  for (const double g : grad)
    if (!std::isfinite(g)) throw std::invalid_argument("direction_sgd: non-finite gradient");
  return {grad.begin(), grad.end()};
}

std::vector<double> DirectionalDerivative::apply(std::span<const double> grad) {
  if (kind_ == Algorithm::sgd) return direction_sgd(grad);
  if (grad.size() != m_.size())
    throw std::invalid_argument("DirectionalDerivative: gradient dimension mismatch");
  ++t_;
  // h = sqrt(1-b2^t)/(1-b1^t) * m/(sqrt(v)+eps)
  const double corr = std::sqrt(1.0 - std::pow(params_.beta2, static_cast<double>(t_))) /
                      (1.0 - std::pow(params_.beta1, static_cast<double>(t_)));
  std::vector<double> h(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) throw std::invalid_argument("direction_adam: non-finite gradient");
    m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * g;
    v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * g * g;
    h[i] = corr * m_[i] / (std::sqrt(v_[i]) + params_.eps);
    if (!std::isfinite(h[i])) throw std::runtime_error("direction_adam: non-finite direction");
  }
  return h;
}

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b, const char* what) {
  const __int128 p = static_cast<__int128>(a) * b;
  if (p > (static_cast<__int128>(1) << 62) || p < -(static_cast<__int128>(1) << 62))
    throw LatticeOverflowError(std::string(what) + ": integer overflow past 2^62");
  return static_cast<std::int64_t>(p);
}

}  // namespace

LatticeWeights::LatticeWeights(std::span<const double> w0, std::int64_t q_p0,
                               std::int64_t alpha_den) {
  // induction base of Eq. (4): the initial vector joins the lattice the run
  // actually lives on, (1/(alpha_den*q_p0)) Z
  denom_ = checked_mul(alpha_den, q_p0, "LatticeWeights");
  num_.reserve(w0.size());
  for (const double v : w0) {
    if (!std::isfinite(v)) throw std::invalid_argument("LatticeWeights: non-finite initial weight");
    const double y = static_cast<double>(denom_) * v;
    if (std::fabs(y) >= 0x1.0p62)
      throw LatticeOverflowError("LatticeWeights: initial weight overflows the lattice");
    num_.push_back(round_half_up_i64(y));
  }
  refresh_mirror();
}

void LatticeWeights::refresh_mirror() {
  mirror_.resize(num_.size());
  const double d = static_cast<double>(denom_);
  for (std::size_t i = 0; i < num_.size(); ++i)
    mirror_[i] = static_cast<double>(num_[i]) / d;
}

void LatticeWeights::rescale(std::int64_t new_denom) {
  if (new_denom == denom_) return;
  if (new_denom % denom_ == 0) {
    const std::int64_t f = new_denom / denom_;
    for (auto& n : num_) n = checked_mul(n, f, "LatticeWeights::rescale");
  } else {
    // incompatible lattices (non-integral base or eta): requantize
    const double ratio = static_cast<double>(new_denom) / static_cast<double>(denom_);
    for (auto& n : num_) n = round_half_up_i64(static_cast<double>(n) * ratio);
    ++rounded_;
  }
  denom_ = new_denom;
  refresh_mirror();
}

void LatticeWeights::apply_step(std::span<const std::int64_t> k, std::int64_t alpha_num) {
  if (k.size() != num_.size()) throw std::invalid_argument("LatticeWeights: dimension mismatch");
  for (std::size_t i = 0; i < num_.size(); ++i) {
    const std::int64_t d = checked_mul(k[i], alpha_num, "LatticeWeights::apply_step");
    num_[i] -= d;
  }
  refresh_mirror();
}

bool LatticeWeights::closure_exact() const {
  const double d = static_cast<double>(denom_);
  for (std::size_t i = 0; i < num_.size(); ++i) {
    const double back = mirror_[i] * d;
    if (!(std::fabs(back - static_cast<double>(num_[i])) < 0.5)) return false;
  }
  return true;
}

RescueResult rescue_vanishing(std::span<const double> h, SchedulerState scheduler,
                              const ScheduleConfig& config) {
  RescueResult r;
  r.scheduler = scheduler;
  const auto quantize_at = [&](std::int64_t qp) {
    r.k.resize(h.size());
    bool all_zero = true;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double y = static_cast<double>(qp) * h[i];
      if (!std::isfinite(y) || std::fabs(y) >= 0x1.0p62)
        throw LatticeOverflowError("rescue_vanishing: Q_p*h overflows");
      r.k[i] = round_half_up_i64(y);
      if (r.k[i] != 0) all_zero = false;
    }
    return all_zero;
  };
  bool vanished = quantize_at(r.scheduler.q_p);
  if (vanished) {
    // ceiling: sup h_bar under strict/clamped enforcement, overflow cap otherwise
    double ceiling = static_cast<double>(config.max_h_bar);
    if (config.enforcement != Enforcement::off)
      ceiling = std::fmin(ceiling, sup_h_bar(r.scheduler.t, config));
    while (vanished && static_cast<double>(r.scheduler.h_bar) < ceiling &&
           r.scheduler.h_bar < config.max_h_bar) {
      ++r.scheduler.h_bar;
      ++r.raises;
      r.scheduler.q_p = q_p_of(r.scheduler.h_bar, config);
      vanished = quantize_at(r.scheduler.q_p);
    }
  }
  r.vanished_at_cap = vanished;
  r.direction.level = QuantLevel(r.scheduler.q_p);
  r.direction.values.resize(h.size());
  const double qp = static_cast<double>(r.scheduler.q_p);
  for (std::size_t i = 0; i < h.size(); ++i)
    r.direction.values[i] = static_cast<double>(r.k[i]) / qp;
  return r;
}

namespace {

// largest h_bar whose weight-lattice denominator alpha_den*eta*base^h still
// fits the int64 budget; resolution raises beyond it would overflow
int weight_budget_cap(const ScheduleConfig& c, std::int64_t alpha_den) {
  int h = c.max_h_bar;
  while (h > 0) {
    const long double d =
        static_cast<long double>(alpha_den) * c.eta * std::pow(static_cast<long double>(c.base), h);
    if (d <= 0x1.0p62l) break;
    --h;
  }
  return h;
}

}  // namespace

Optimizer::Optimizer(std::span<const double> w0, StepConfig step_config,
                     ScheduleConfig schedule_config)
    : step_config_(step_config),
      schedule_config_(schedule_config),
      direction_(step_config.algorithm, static_cast<int>(w0.size()), step_config.adam) {
  if (step_config_.alpha.num <= 0 || step_config_.alpha.num > step_config_.alpha.den)
    throw std::invalid_argument("Optimizer: alpha must be in (0, 1]");
  if (step_config_.quantized)
    schedule_config_.max_h_bar =
        std::min(schedule_config_.max_h_bar, weight_budget_cap(schedule_config_, step_config_.alpha.den));
  scheduler_ = make_scheduler(schedule_config_);
  if (step_config_.quantized) {
    lattice_ = LatticeWeights(w0, scheduler_.q_p, step_config_.alpha.den);
  } else {
    plain_.assign(w0.begin(), w0.end());
  }
}

const std::vector<double>& Optimizer::weights() const {
  return step_config_.quantized ? lattice_.values() : plain_;
}

std::vector<double> step_unquantized(std::span<const double> w, double alpha,
                                     std::span<const double> h) {
  if (w.size() != h.size()) throw std::invalid_argument("step_unquantized: dimension mismatch");
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - alpha * h[i];
  return out;
}

StepOutcome Optimizer::step(std::span<const double> grad) {
  StepOutcome out;
  out.raw_direction = direction_.apply(grad);
  if (!step_config_.quantized) {
    plain_ = step_unquantized(plain_, step_config_.alpha.value(), out.raw_direction);
    out.new_weights = plain_;
    out.quantized_direction = out.raw_direction;
    out.h_bar_after = scheduler_.h_bar;
    return out;
  }

  // h^Q <- (1/Q_p) (Q_p h)^Q, with the Algorithm 2 rescue on vanish
  auto first = quantize_integer_grid([&] {
    std::vector<double> scaled(out.raw_direction.size());
    const double qp = static_cast<double>(scheduler_.q_p);
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = qp * out.raw_direction[i];
    return scaled;
  }());
  bool all_zero = true;
  for (const auto k : first.first)
    if (k != 0) {
      all_zero = false;
      break;
    }
  out.vanished_initially = all_zero;

  std::vector<std::int64_t> k = std::move(first.first);
  if (all_zero && step_config_.rescue) {
    auto rescued = rescue_vanishing(out.raw_direction, scheduler_, schedule_config_);
    scheduler_ = rescued.scheduler;
    k = std::move(rescued.k);
    out.rescue_raises = rescued.raises;
    out.vanished_at_cap = rescued.vanished_at_cap;
  } else if (all_zero) {
    out.vanished_at_cap = true;  // rescue disabled: a vanished step stays vanished
  }

  const double qp = static_cast<double>(scheduler_.q_p);
  out.quantized_direction.resize(k.size());
  out.eps_applied.resize(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    out.quantized_direction[i] = static_cast<double>(k[i]) / qp;
    out.eps_applied[i] = static_cast<double>(k[i]) - qp * out.raw_direction[i];
  }

  // weights live on the (1/(alpha_den * Q_p)) lattice in force now
  lattice_.rescale(checked_mul(step_config_.alpha.den, scheduler_.q_p, "Optimizer::step"));
  lattice_.apply_step(k, step_config_.alpha.num);
  out.new_weights = lattice_.values();
  out.h_bar_after = scheduler_.h_bar;
  return out;
}

void Optimizer::advance_epoch() {
  scheduler_ = qlattice::advance_epoch(scheduler_, schedule_config_);
}

bool Optimizer::closure_ok() const {
  if (!step_config_.quantized) return true;
  const std::int64_t expect = step_config_.alpha.den * scheduler_.q_p;
  // the lattice may lag one bound-raise behind until the next step touches it
  if (lattice_.denom() != expect && expect % lattice_.denom() != 0) return false;
  return lattice_.closure_exact();
}

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  for (const double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

RunRecord run(const Objective& objective, const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.run_id = config.run_id;
  rec.algorithm = config.step.algorithm;
  rec.quantized = config.step.quantized;
  rec.alpha = config.step.alpha;
  rec.seed = config.seed;

  const int n = objective.dim();
  ScheduleConfig sched = config.schedule;
  sched.n = n;

  std::vector<double> w0;
  if (config.init) {
    w0 = *config.init;
    if (static_cast<int>(w0.size()) != n)
      throw std::invalid_argument("run: init has wrong dimension");
  } else if (const auto* mlp = dynamic_cast<const MlpObjective*>(&objective); mlp != nullptr) {
    w0 = mlp->initial_weights(config.seed);
  } else {
    const auto dom = objective.domain();
    Rng rng(mix_seed(config.seed, 0xD1CE));
    w0.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      w0[static_cast<std::size_t>(i)] =
          dom.center[static_cast<std::size_t>(i)] + rng.uniform(-1.0, 1.0) * dom.radius / std::sqrt(n);
  }

  Rng audit_rng(mix_seed(config.seed, 0xAD17));
  const int batches = objective.batches_per_epoch();
  long consecutive_vanished = 0;

  try {
    Optimizer opt(w0, config.step, sched);
    std::vector<double> grad(static_cast<std::size_t>(n));
    long step_idx = 0;
    bool stop = false;
    for (long epoch = 0; epoch < config.epochs && !stop; ++epoch) {
      for (int b = 0; b < batches && !stop; ++b) {
        const double f =
            objective.batch_eval_grad(opt.weights(), config.seed, epoch, b, grad);
        const double gn = norm2(grad);
        if (!std::isfinite(f) || !std::isfinite(gn) || !all_finite(opt.weights())) {
          rec.diverged = true;
          rec.error = "non-finite objective or weights at step " + std::to_string(step_idx);
          stop = true;
          break;
        }
        const auto outcome = opt.step(grad);
        rec.rescue_count += outcome.rescue_raises;
        if (outcome.vanished_at_cap)
          ++consecutive_vanished;
        else
          consecutive_vanished = 0;

        const auto& st = opt.scheduler();
        const bool th_ok = theorem_compliant(st, sched);
        rec.theorem_compliant_all = rec.theorem_compliant_all && th_ok;
        if (step_idx % config.trace_stride == 0) {
          TraceRow row;
          row.step = step_idx;
          row.epoch = epoch;
          row.batch = b;
          row.f = f;
          row.grad_norm = gn;
          row.h_bar = st.h_bar;
          row.q_p = st.q_p;
          row.sigma = noise_floor_sigma(n, st.q_p);
          row.sigma_eq8 = noise_scale_eq8(n, st.q_p);
          row.inf_sigma = sigma_infimum(st.t, sched.C);
          row.sup_h = st.sup_h;
          row.inf_h = st.inf_h;
          row.rescues = rec.rescue_count;
          row.vanished_at_cap = outcome.vanished_at_cap;
          row.theorem_ok = th_ok;
          rec.trace.push_back(row);
        }
        if (config.step.quantized && audit_rng.uniform01() < config.closure_sample_rate) {
          ++rec.closure_checks;
          if (!opt.closure_ok()) ++rec.closure_violations;
        }
        ++step_idx;
        if (config.grad_tol > 0.0 && gn < config.grad_tol) {
          rec.stopped_on_grad_tol = true;
          stop = true;
        }
        if (config.vanish_stop > 0 && consecutive_vanished >= config.vanish_stop) {
          rec.stopped_on_vanish = true;
          stop = true;
        }
        if (sched.per_batch && !stop) opt.advance_epoch();
      }
      if (!sched.per_batch && !stop) opt.advance_epoch();
      rec.epochs_run = epoch + 1;
      if (const auto acc = objective.accuracy(opt.weights(), Split::test)) {
        if (!rec.best_test_metric || *acc > *rec.best_test_metric) rec.best_test_metric = acc;
      }
    }
    rec.steps = step_idx;
    rec.final_weights = opt.weights();
    rec.bound_violations = opt.scheduler().violations;
    rec.rounded_rescales = opt.lattice().rounded_rescales();
    rec.h_bar_final = opt.scheduler().h_bar;
    rec.q_p_final = opt.scheduler().q_p;
  } catch (const std::exception& e) {
    rec.diverged = true;
    rec.error = e.what();
  }

  if (!rec.final_weights.empty() && all_finite(rec.final_weights)) {
    rec.final_f = objective.eval(rec.final_weights);
    std::vector<double> g(static_cast<std::size_t>(n));
    objective.grad(rec.final_weights, g);
    rec.final_grad_norm = norm2(g);
    rec.final_train_metric = objective.accuracy(rec.final_weights, Split::train);
    rec.final_test_metric = objective.accuracy(rec.final_weights, Split::test);
  } else {
    rec.final_f = std::numeric_limits<double>::quiet_NaN();
    rec.final_grad_norm = std::numeric_limits<double>::quiet_NaN();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void RunRecord::write_trace_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::fprintf(f,
               "step,epoch,batch,f,grad_norm,h_bar,q_p,sigma,sigma_eq8,inf_sigma,sup_h,inf_h,"
               "rescues,vanished_at_cap,theorem_ok\n");
  for (const auto& r : trace)
    std::fprintf(f, "%ld,%ld,%d,%.17g,%.17g,%d,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%ld,%d,%d\n",
                 r.step, r.epoch, r.batch, r.f, r.grad_norm, r.h_bar,
                 static_cast<long long>(r.q_p), r.sigma, r.sigma_eq8, r.inf_sigma, r.sup_h,
                 r.inf_h, r.rescues, r.vanished_at_cap ? 1 : 0, r.theorem_ok ? 1 : 0);
  std::fclose(f);
}

nlohmann::json RunRecord::metadata_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["algorithm"] = to_string(algorithm);
  j["quantized"] = quantized;
  j["alpha"] = alpha.str();
  j["alpha_value"] = alpha.value();
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["epochs_run"] = epochs_run;
  j["steps"] = steps;
  j["final_f"] = std::isfinite(final_f) ? nlohmann::json(final_f) : nlohmann::json();
  j["final_grad_norm"] =
      std::isfinite(final_grad_norm) ? nlohmann::json(final_grad_norm) : nlohmann::json();
  if (final_train_metric) j["final_train_metric"] = *final_train_metric;
  if (final_test_metric) j["final_test_metric"] = *final_test_metric;
  if (best_test_metric) j["best_test_metric"] = *best_test_metric;
  j["rescue_count"] = rescue_count;
  j["bound_violations"] = bound_violations;
  j["closure_checks"] = closure_checks;
  j["closure_violations"] = closure_violations;
  j["rounded_rescales"] = rounded_rescales;
  j["h_bar_final"] = h_bar_final;
  j["q_p_final"] = q_p_final;
  j["theorem_compliant_all"] = theorem_compliant_all;
  j["stopped_on_vanish"] = stopped_on_vanish;
  j["stopped_on_grad_tol"] = stopped_on_grad_tol;
  j["diverged"] = diverged;
  if (!error.empty()) j["error"] = error;
  j["wall_ms"] = wall_ms;
  return j;
}

}  // namespace qlattice
