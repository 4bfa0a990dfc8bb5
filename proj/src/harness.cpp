#include "qlattice/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "qlattice/rng.hpp"

namespace qlattice {

namespace fs = std::filesystem;

std::vector<RunPlanItem> plan_sweep(const ExperimentConfig& config) {
  std::vector<RunPlanItem> items;
  for (const auto algo : config.algorithms)
    for (const bool q : config.quantization)
      for (const auto& lr : config.learning_rates)
        for (const auto seed : config.seeds) {
          RunPlanItem it;
          it.algorithm = algo;
          it.quantized = q;
          it.lr = lr;
          it.seed = seed;
          it.run_id = to_string(algo) + (q ? "_q" : "_u") + "_lr" + std::to_string(lr.num) + "_" +
                      std::to_string(lr.den) + "_s" + std::to_string(seed);
          items.push_back(std::move(it));
        }
  return items;
}

namespace {

RunRecord execute_one(const ExperimentConfig& config, const RunPlanItem& item,
                      const std::string& config_hash) {
  const auto objective = build_objective(config.objective, item.seed);
  RunConfig rc;
  rc.step.alpha = item.lr;
  rc.step.algorithm = item.algorithm;
  rc.step.quantized = item.quantized;
  rc.step.rescue = config.rescue;
  rc.schedule = config.schedule;
  rc.schedule.n = objective->dim();
  rc.epochs = config.epochs;
  rc.grad_tol = config.grad_tol;
  rc.vanish_stop = config.vanish_stop;
  rc.seed = item.seed;
  rc.trace_stride = config.trace_stride;
  rc.run_id = item.run_id;
  if (config.init_fixed) {
    rc.init = config.init_fixed;
  } else if (config.init_uniform) {
    Rng rng(mix_seed(item.seed, 0x1B17));
    std::vector<double> w0(static_cast<std::size_t>(objective->dim()));
    for (auto& v : w0) v = rng.uniform(config.init_uniform->first, config.init_uniform->second);
    rc.init = std::move(w0);
  }
  auto rec = run(*objective, rc);
  rec.config_hash = config_hash;
  return rec;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

SummaryTable summarize(const std::vector<RunRecord>& records) {
  struct Key {
    std::string algo;
    bool q;
    std::string lr;
    double lrv;
    bool operator<(const Key& o) const {
      if (algo != o.algo) return algo < o.algo;
      if (q != o.q) return q < o.q;
      return lrv > o.lrv;  // Table-1 order: large rates first
    }
  };
  std::map<Key, std::vector<const RunRecord*>> groups;
  bool any_accuracy = false;
  for (const auto& r : records) {
    groups[Key{to_string(r.algorithm), r.quantized, r.alpha.str(), r.alpha.value()}].push_back(&r);
    any_accuracy = any_accuracy || r.final_test_metric.has_value();
  }
  SummaryTable table;
  table.metric = any_accuracy ? "accuracy" : "final_f";
  for (const auto& [key, runs] : groups) {
    SummaryRow row;
    row.algorithm = key.algo;
    row.quantized = key.q;
    row.lr = key.lr;
    row.lr_value = key.lrv;
    std::vector<double> train, test;
    for (const auto* r : runs) {
      ++row.seed_count;
      if (r->diverged) {
        ++row.failures;
        continue;
      }
      if (any_accuracy) {
        if (r->final_train_metric) train.push_back(*r->final_train_metric);
        if (r->final_test_metric) test.push_back(*r->final_test_metric);
      } else {
        train.push_back(r->final_f);
        test.push_back(r->final_f);
      }
    }
    row.train_mean = mean_of(train);
    row.train_std = std_of(train);
    row.test_mean = mean_of(test);
    row.test_std = std_of(test);
    table.rows.push_back(std::move(row));
  }
  return table;
}

SweepResult run_sweep(const ExperimentConfig& config, int jobs, bool verbose) {
  config.validate();
  const auto items = plan_sweep(config);
  const std::string config_hash = config.hash();
  SweepResult result;
  result.records.resize(items.size());

  if (jobs < 1) jobs = 1;
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), items.size());
  std::atomic<std::size_t> next{0};
  std::atomic<long> done{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      result.records[i] = execute_one(config, items[i], config_hash);
      const long d = ++done;
      if (verbose && (d % 25 == 0 || d == static_cast<long>(items.size())))
        std::fprintf(stderr, "  [%ld/%zu] runs finished\n", d, items.size());
    }
  };
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t k = 0; k < n_workers; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  result.summary = summarize(result.records);
  return result;
}

void write_sweep_artifacts(const std::string& out_dir, const ExperimentConfig& config,
                           const SweepResult& result) {
  fs::create_directories(out_dir);
  {
    std::ofstream cfg(fs::path(out_dir) / "config.json");
    cfg << config.to_json().dump(2) << "\n";
  }
  for (const auto& rec : result.records) {
    rec.write_trace_csv((fs::path(out_dir) / (rec.run_id + ".trace.csv")).string());
    std::ofstream meta(fs::path(out_dir) / (rec.run_id + ".meta.json"));
    meta << rec.metadata_json().dump(2) << "\n";
  }
  {
    std::ofstream sj(fs::path(out_dir) / "summary.json");
    sj << result.summary.to_json().dump(2) << "\n";
  }
  result.summary.write_csv((fs::path(out_dir) / "summary.csv").string());
}

nlohmann::json SummaryTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json jr;
    jr["algorithm"] = r.algorithm;
    jr["quantized"] = r.quantized;
    jr["learning_rate"] = r.lr;
    jr["learning_rate_value"] = r.lr_value;
    jr["seed_count"] = r.seed_count;
    jr["failures"] = r.failures;
    jr["train_mean"] = r.train_mean;
    jr["train_std"] = r.train_std;
    jr["test_mean"] = r.test_mean;
    jr["test_std"] = r.test_std;
    rows_json.push_back(std::move(jr));
  }
  return nlohmann::json{{"metric", metric}, {"rows", rows_json}};
}

void SummaryTable::write_csv(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open " + path);
  std::fprintf(f,
               "algorithm,quantized,learning_rate,learning_rate_value,seed_count,failures,"
               "train_mean,train_std,test_mean,test_std\n");
  for (const auto& r : rows)
    std::fprintf(f, "%s,%d,%s,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g\n", r.algorithm.c_str(),
                 r.quantized ? 1 : 0, r.lr.c_str(), r.lr_value, r.seed_count, r.failures,
                 r.train_mean, r.train_std, r.test_mean, r.test_std);
  std::fclose(f);
}

SummaryTable aggregate_directory(const std::string& dir) {
  std::vector<RunRecord> records;
  std::string hash;
  std::vector<std::string> offenders;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 10 && name.substr(name.size() - 10) == ".meta.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    RunRecord r;
    r.run_id = j.value("run_id", path.stem().string());
    r.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    r.quantized = j.at("quantized").get<bool>();
    r.alpha = Rational::parse(j.at("alpha").get<std::string>());
    r.seed = j.value("seed", std::uint64_t{0});
    r.config_hash = j.value("config_hash", "");
    if (!j.at("final_f").is_null()) r.final_f = j.at("final_f").get<double>();
    if (j.contains("final_train_metric")) r.final_train_metric = j.at("final_train_metric").get<double>();
    if (j.contains("final_test_metric")) r.final_test_metric = j.at("final_test_metric").get<double>();
    r.diverged = j.value("diverged", false);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw std::runtime_error("aggregate: no run records in " + dir);
  std::map<std::string, int> hash_counts;
  for (const auto& r : records) ++hash_counts[r.config_hash];
  for (const auto& [h, cnt] : hash_counts)
    if (hash.empty() || cnt > hash_counts[hash]) hash = h;
  for (const auto& r : records)
    if (r.config_hash != hash) offenders.push_back(r.run_id);
  if (!offenders.empty()) {
    std::string msg = "aggregate: mixed config hashes in " + dir + "; offenders:";
    for (const auto& o : offenders) msg += " " + o;
    throw std::runtime_error(msg);
  }
  return summarize(records);
}

}  // namespace qlattice
