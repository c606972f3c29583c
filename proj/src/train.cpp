#include "pcattn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "pcattn/rng.hpp"

namespace pcattn {

namespace {

using Clock = std::chrono::steady_clock;

constexpr uint64_t kStreamTrain = 1;
constexpr uint64_t kStreamEval = 2;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_name(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision: " + s);
}

void TrainConfig::validate() const {
  task.validate();
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch >= 1");
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr > 0");
  if (warmup_steps > total_steps)
    throw std::invalid_argument("TrainConfig: warmup_steps <= total_steps");
  if (total_steps < 1) throw std::invalid_argument("TrainConfig: total_steps >= 1");
  if (eval_every < 1 || eval_n < 1)
    throw std::invalid_argument("TrainConfig: eval_every and eval_n >= 1");
  stack_config().validate();
}

StackConfig TrainConfig::stack_config() const {
  StackConfig sc;
  sc.cell.cell = cell;
  sc.cell.dim = dim;
  sc.cell.heads = heads;
  sc.cell.dim_head = dim_head;
  sc.cell.bias_seq_len = task.sample_len();
  sc.cell.tau_init = tau_init;
  sc.depth = depth;
  sc.ff_mult = ff_mult;
  sc.rope = true;
  sc.rope_base = rope_base;
  sc.vocab = task.model_vocab();
  sc.value_channels = task.value_channels();
  sc.n_classes = task.n_classes();
  return sc;
}

double lr_at(int step, double lr, int warmup_steps, int total_steps) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_at: step out of range");
  if (warmup_steps > 0 && step <= warmup_steps)
    return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

namespace {

SeqInput to_input(const TaskSample& s) {
  SeqInput in;
  in.n = s.n;
  in.tokens = s.tokens;
  in.values = s.values;
  return in;
}

// Forward + loss for one sample; returns the loss node.
template <typename T>
RealTensor<T> sample_loss(const StackModel<T>& model, Tape<T>& tape, const Bound<T>& w,
                          const TaskSample& s) {
  auto logits = stack_logits(model, tape, w, to_input(s));
  auto sel = select_rows(logits, s.loss_mask);
  if (s.multilabel) return bce_logits_mean(sel, s.target);
  return ce_mean(sel, s.target);
}

template <typename T>
std::vector<int32_t> predict(const StackModel<T>& model, const TaskSample& s) {
  Tape<T> tape;
  auto w = bind_all(tape, model.store, false);
  auto logits = stack_logits(model, tape, w, to_input(s));
  auto sel = select_rows(logits, s.loss_mask);
  const auto& v = sel.value();
  const int64_t c = sel.cols();
  std::vector<int32_t> preds;
  if (s.multilabel) {
    for (int64_t j = 0; j < c; ++j) preds.push_back(v[static_cast<size_t>(j)] > T(0) ? 1 : 0);
  } else {
    for (int64_t i = 0; i < sel.rows(); ++i) {
      int32_t best = 0;
      for (int64_t j = 1; j < c; ++j)
        if (v[static_cast<size_t>(i * c + j)] > v[static_cast<size_t>(i * c + best)]) best = static_cast<int32_t>(j);
      preds.push_back(best);
    }
  }
  return preds;
}

// Deterministic fixed-chunk parallel map: worker t covers [t*n/T, (t+1)*n/T)
// and results are reduced in worker order, so the outcome is independent of
// scheduling.
template <typename Fn>
void parallel_chunks(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    const int lo = static_cast<int>(static_cast<int64_t>(n) * t / threads);
    const int hi = static_cast<int>(static_cast<int64_t>(n) * (t + 1) / threads);
    pool.emplace_back([&fn, t, lo, hi] { fn(t, lo, hi); });
  }
  for (auto& th : pool) th.join();
}

struct EvalOutcome {
  double loss = 0.0;
  double metric = 0.0;
};

template <typename T>
EvalOutcome run_eval(const StackModel<T>& model, const std::vector<TaskSample>& eval_set,
                     int threads) {
  const int n = static_cast<int>(eval_set.size());
  std::vector<double> losses(static_cast<size_t>(n), 0.0), metrics(static_cast<size_t>(n), 0.0);
  parallel_chunks(n, threads, [&](int, int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      Tape<T> tape;
      auto w = bind_all(tape, model.store, false);
      losses[static_cast<size_t>(i)] =
          static_cast<double>(sample_loss(model, tape, w, eval_set[static_cast<size_t>(i)]).value()[0]);
      metrics[static_cast<size_t>(i)] =
          sample_metric(eval_set[static_cast<size_t>(i)], predict(model, eval_set[static_cast<size_t>(i)]));
    }
  });
  EvalOutcome out;
  for (int i = 0; i < n; ++i) {
    out.loss += losses[static_cast<size_t>(i)];
    out.metric += metrics[static_cast<size_t>(i)];
  }
  out.loss /= n;
  out.metric /= n;
  return out;
}

nlohmann::ordered_json train_config_json(const TrainConfig& cfg, int resolved_threads);

template <typename T>
RunRecord run_training_impl(const TrainConfig& cfg, const std::string& out_dir) {
  const auto t0 = Clock::now();
  RunRecord rec;
  rec.metric_name = cfg.task.metric_name();

  auto model = build_stack<T>(cfg.stack_config(), cfg.seed);
  auto adam = AdamState<T>::init(model.store);
  const int threads = cfg.threads > 0
                          ? cfg.threads
                          : std::max(1u, std::min(std::thread::hardware_concurrency(),
                                                  static_cast<unsigned>(cfg.batch)));

  // held-out evaluation stream, disjoint from training by stream id
  std::vector<TaskSample> eval_set;
  eval_set.reserve(static_cast<size_t>(cfg.eval_n));
  for (int i = 0; i < cfg.eval_n; ++i)
    eval_set.push_back(generate(cfg.task, mix_seed(cfg.seed, kStreamEval, static_cast<uint64_t>(i))));

  std::filesystem::path dir(out_dir);
  std::ofstream metrics_out;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(dir);
    std::ofstream cfg_out(dir / "config.json", std::ios::trunc);
    cfg_out << train_config_json(cfg, threads).dump(2) << "\n";
    metrics_out.open(dir / "metrics.jsonl", std::ios::trunc);
  }

  auto record_eval = [&](int step, double lr_t) {
    const EvalOutcome ev = run_eval(model, eval_set, threads);
    MetricPoint pt{step, ev.loss, ev.metric, lr_t, ms_since(t0)};
    rec.points.push_back(pt);
    rec.best_metric = std::max(rec.best_metric, pt.metric);
    rec.best_eval_loss = std::min(rec.best_eval_loss, pt.loss);
    if (metrics_out.is_open()) {
      nlohmann::ordered_json j;
      j["step"] = pt.step;
      j["loss"] = pt.loss;
      j["metric"] = pt.metric;
      j["lr"] = pt.lr;
      j["wall_ms"] = pt.wall_ms;
      metrics_out << j.dump() << "\n";
      metrics_out.flush();
    }
  };

  std::vector<std::vector<T>> grads(model.store.size());
  std::vector<std::vector<std::vector<T>>> worker_grads;
  bool aborted = false;

  for (int step = 1; step <= cfg.total_steps && !aborted; ++step) {
    const double lr_t = lr_at(step, cfg.lr, cfg.warmup_steps, cfg.total_steps);

    for (size_t pi = 0; pi < model.store.size(); ++pi)
      grads[pi].assign(model.store.values[pi].data.size(), T(0));
    const int nthreads = std::min(threads, cfg.batch);
    worker_grads.assign(static_cast<size_t>(nthreads), {});
    std::vector<double> worker_loss(static_cast<size_t>(nthreads), 0.0);

    parallel_chunks(cfg.batch, nthreads, [&](int t, int lo, int hi) {
      auto& local = worker_grads[static_cast<size_t>(t)];
      local.resize(model.store.size());
      for (size_t pi = 0; pi < model.store.size(); ++pi)
        local[pi].assign(model.store.values[pi].data.size(), T(0));
      for (int i = lo; i < hi; ++i) {
        const uint64_t idx = static_cast<uint64_t>(step - 1) * cfg.batch + static_cast<uint64_t>(i);
        const TaskSample sample = generate(cfg.task, mix_seed(cfg.seed, kStreamTrain, idx));
        Tape<T> tape;
        auto w = bind_all(tape, model.store, true);
        auto loss = sample_loss(model, tape, w, sample);
        worker_loss[static_cast<size_t>(t)] += static_cast<double>(loss.value()[0]);
        tape.backward(loss);
        for (size_t pi = 0; pi < model.store.size(); ++pi) {
          const auto& g = tape.grad(w.leaves[pi]);
          if (g.empty()) continue;
          auto& acc = local[pi];
          for (size_t j = 0; j < g.size(); ++j) acc[j] += g[j];
        }
      }
    });

    double step_loss = 0.0;
    for (int t = 0; t < nthreads; ++t) {
      step_loss += worker_loss[static_cast<size_t>(t)];
      const auto& local = worker_grads[static_cast<size_t>(t)];
      if (local.empty()) continue;
      for (size_t pi = 0; pi < grads.size(); ++pi)
        for (size_t j = 0; j < grads[pi].size(); ++j) grads[pi][j] += local[pi][j];
    }
    step_loss /= cfg.batch;
    const T inv_batch = static_cast<T>(1.0 / cfg.batch);
    for (auto& g : grads)
      for (T& x : g) x *= inv_batch;

    if (!std::isfinite(step_loss)) {
      rec.status = "nan_abort";
      aborted = true;
      break;
    }
    clip_gradients(grads, cfg.clip_norm);
    adamw_step(model.store, grads, adam, lr_t, cfg.weight_decay);

    if (step % cfg.eval_every == 0 || step == cfg.total_steps) record_eval(step, lr_t);
  }

  if (rec.points.empty() && !aborted) record_eval(cfg.total_steps, 0.0);
  rec.elapsed_ms = ms_since(t0);
  if (!out_dir.empty()) {
    rec.run_dir = out_dir;
    nlohmann::ordered_json s;
    s["status"] = rec.status;
    s["metric_name"] = rec.metric_name;
    s["best_metric"] = rec.best_metric;
    s["best_eval_loss"] = rec.points.empty() ? 0.0 : rec.best_eval_loss;
    s["elapsed_ms"] = rec.elapsed_ms;
    s["evals"] = rec.points.size();
    std::ofstream sum_out(dir / "summary.json", std::ios::trunc);
    sum_out << s.dump(2) << "\n";
  }
  return rec;
}

nlohmann::ordered_json train_config_json(const TrainConfig& cfg, int resolved_threads) {
  nlohmann::ordered_json j;
  j["cell"]["name"] = cell_name(cfg.cell);
  j["cell"]["dim"] = cfg.dim;
  j["cell"]["depth"] = cfg.depth;
  j["cell"]["heads"] = cfg.heads;
  j["cell"]["dim_head"] = cfg.dim_head;
  j["cell"]["ff_mult"] = cfg.ff_mult;
  j["cell"]["rope_base"] = cfg.rope_base;
  j["cell"]["tau_init"] = cfg.tau_init;
  j["task"]["name"] = cfg.task.name;
  j["task"]["k"] = cfg.task.k;
  j["task"]["delay"] = cfg.task.delay;
  j["task"]["vocab"] = cfg.task.vocab;
  j["task"]["seq_len"] = cfg.task.seq_len;
  j["task"]["depth_ratio"] = cfg.task.depth_ratio;
  j["task"]["max_depth"] = cfg.task.max_depth;
  j["task"]["max_args"] = cfg.task.max_args;
  j["task"]["max_len"] = cfg.task.max_len;
  j["task"]["bins"] = cfg.task.bins;
  j["task"]["n_active"] = cfg.task.n_active;
  j["task"]["n_samples"] = cfg.task.n_samples;
  j["task"]["snr_db"] = cfg.task.snr_db;
  j["task"]["image_size"] = cfg.task.image_size;
  j["task"]["mnist_dir"] = cfg.task.mnist_dir;
  j["train"]["batch"] = cfg.batch;
  j["train"]["lr"] = cfg.lr;
  j["train"]["warmup_steps"] = cfg.warmup_steps;
  j["train"]["total_steps"] = cfg.total_steps;
  j["train"]["weight_decay"] = cfg.weight_decay;
  j["train"]["clip_norm"] = cfg.clip_norm;
  j["train"]["eval_every"] = cfg.eval_every;
  j["train"]["eval_n"] = cfg.eval_n;
  j["train"]["precision"] = precision_name(cfg.precision);
  j["train"]["threads"] = resolved_threads;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

RunRecord run_training(const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.precision == Precision::f64) return run_training_impl<double>(cfg, out_dir);
  return run_training_impl<float>(cfg, out_dir);
}

SweepResult run_sweep(const TrainConfig& base, const std::string& axis,
                      const std::vector<std::string>& values, const std::string& out_root,
                      int jobs, bool stuck_seed_policy) {
  if (values.empty()) throw std::invalid_argument("run_sweep: no axis values");
  SweepResult result;
  result.sweep_dir = out_root;

  auto variant = [&](const std::string& value) {
    TrainConfig cfg = base;
    std::string label;
    if (axis == "seed") {
      cfg.seed = std::stoull(value);
      label = "seed" + value;
    } else if (axis == "lr") {
      cfg.lr = std::stod(value);
      label = "lr" + value;
    } else if (axis == "batch") {
      cfg.batch = std::stoi(value);
      label = "batch" + value;
    } else if (axis == "gate") {
      cfg.cell = cell_from_name(value);
      label = value;
    } else if (axis == "depth") {
      cfg.depth = std::stoi(value);
      label = "depth" + value;
    } else {
      throw std::invalid_argument("run_sweep: unknown axis " + axis);
    }
    return std::make_pair(cfg, label);
  };

  auto launch = [&](const std::vector<std::string>& vals) {
    std::vector<std::pair<TrainConfig, std::string>> cfgs;
    for (const auto& v : vals) cfgs.push_back(variant(v));
    std::vector<RunRecord> recs(cfgs.size());
    const int workers = std::max(1, jobs);
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int wkr = 0; wkr < workers; ++wkr)
      pool.emplace_back([&] {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= cfgs.size()) return;
          auto cfg = cfgs[i].first;
          if (jobs > 1 && cfg.threads == 0) cfg.threads = 1;  // one core per worker
          std::string dir = out_root.empty() ? "" : out_root + "/" + cfgs[i].second;
          try {
            recs[i] = run_training(cfg, dir);
          } catch (const std::exception& e) {
            recs[i].status = std::string("error: ") + e.what();  // sweep continues
          }
        }
      });
    for (auto& th : pool) th.join();
    for (size_t i = 0; i < cfgs.size(); ++i) {
      result.labels.push_back(cfgs[i].second);
      result.runs.push_back(std::move(recs[i]));
    }
  };

  launch(values);

  if (stuck_seed_policy && axis == "seed" && values.size() >= 3) {
    const double chance = mc_chance(base.task, 2000, 0x5eed);
    int stuck = 0;
    for (const auto& r : result.runs)
      if (std::abs(r.best_metric - chance) <= 0.05) ++stuck;
    if (3 * stuck >= 2 * static_cast<int>(result.runs.size())) {
      std::vector<std::string> extra;
      for (uint64_t s = values.size(); s < 10; ++s) extra.push_back(std::to_string(s));
      if (!extra.empty()) {
        result.stuck_extended = true;
        launch(extra);
      }
    }
  }

  std::vector<double> best;
  for (const auto& r : result.runs) best.push_back(r.best_metric);
  result.median = quantile(best, 0.5);
  result.q25 = quantile(best, 0.25);
  result.q75 = quantile(best, 0.75);

  if (!out_root.empty()) {
    std::filesystem::create_directories(out_root);
    nlohmann::ordered_json j;
    j["axis"] = axis;
    j["labels"] = result.labels;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : result.runs) {
      nlohmann::ordered_json rj;
      rj["status"] = r.status;
      rj["best_metric"] = r.best_metric;
      rj["best_eval_loss"] = r.best_eval_loss;
      runs.push_back(rj);
    }
    j["runs"] = runs;
    j["median"] = result.median;
    j["q25"] = result.q25;
    j["q75"] = result.q75;
    j["stuck_extended"] = result.stuck_extended;
    std::ofstream out(std::filesystem::path(out_root) / "sweep.json", std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  return result;
}

}  // namespace pcattn
