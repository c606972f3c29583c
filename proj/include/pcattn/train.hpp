#pragma once

#include <limits>
#include <string>
#include <vector>

#include "pcattn/substrate.hpp"
#include "pcattn/tasks.hpp"

namespace pcattn {

enum class Precision { f32, f64 };

const char* precision_name(Precision p);
Precision precision_from_name(const std::string& s);

struct TrainConfig {
  CellName cell = CellName::complex_sigmoid;
  int dim = 128, depth = 4, heads = 4, dim_head = 32, ff_mult = 4;
  double rope_base = 10000.0;
  double tau_init = 0.5;
  TaskConfig task;

  int batch = 32;
  double lr = 3e-3;
  int warmup_steps = 200;
  int total_steps = 2000;
  double weight_decay = 1e-2;  // A2-protocol default; schedule-level override available
  double clip_norm = 1.0;
  uint64_t seed = 0;
  int eval_every = 100;
  int eval_n = 512;
  Precision precision = Precision::f32;
  int threads = 0;  // 0: hardware concurrency

  void validate() const;
  StackConfig stack_config() const;
};

struct MetricPoint {
  int step = 0;
  double loss = 0.0;    // eval loss
  double metric = 0.0;  // task metric on the held-out stream
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct RunRecord {
  std::string status = "ok";  // ok | nan_abort
  std::string metric_name;
  std::vector<MetricPoint> points;
  double best_metric = 0.0;
  double best_eval_loss = std::numeric_limits<double>::infinity();
  double elapsed_ms = 0.0;
  std::string run_dir;  // empty when artifacts were not written
};

// Linear warmup to lr over warmup_steps, cosine decay to zero at total_steps.
double lr_at(int step, double lr, int warmup_steps, int total_steps);

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  int64_t t = 0;

  static AdamState init(const ParamStore<T>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params.values) {
      st.m.emplace_back(p.data.size(), T(0));
      st.v.emplace_back(p.data.size(), T(0));
    }
    return st;
  }
};

// Decoupled weight decay applied before the bias-corrected moment update.
template <typename T>
void adamw_step(ParamStore<T>& params, const std::vector<std::vector<T>>& grads,
                AdamState<T>& state, double lr_t, double weight_decay, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8) {
  if (grads.size() != params.size()) throw std::invalid_argument("adamw_step: grad count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params.values[pi].data;
    const auto& g = grads[pi];
    if (g.size() != p.size()) throw std::invalid_argument("adamw_step: grad shape mismatch");
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i])))
        throw std::runtime_error("adamw_step: non-finite gradient");
      p[i] -= static_cast<T>(lr_t * weight_decay) * p[i];
      m[i] = static_cast<T>(beta1) * m[i] + static_cast<T>(1.0 - beta1) * g[i];
      v[i] = static_cast<T>(beta2) * v[i] + static_cast<T>(1.0 - beta2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      p[i] -= static_cast<T>(lr_t * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// Rescales so the global L2 norm is at most max_norm; returns the pre-clip
// norm.
template <typename T>
double clip_gradients(std::vector<std::vector<T>>& grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads)
    for (const T& x : g) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (T& x : g) x *= s;
  }
  return norm;
}

// Runs one seeded training job. When out_dir is non-empty it receives
// config.json, metrics.jsonl and summary.json.
RunRecord run_training(const TrainConfig& cfg, const std::string& out_dir);

struct SweepResult {
  std::vector<std::string> labels;
  std::vector<RunRecord> runs;
  double median = 0.0, q25 = 0.0, q75 = 0.0;
  bool stuck_extended = false;
  std::string sweep_dir;
};

// Independent runs along one axis; aggregates median and IQR of the best
// metric. With the stuck-seed policy on a seed axis, >= 2/3 of seeds ending
// at chance (within +-0.05) extends the sweep to 10 seeds.
SweepResult run_sweep(const TrainConfig& base, const std::string& axis,
                      const std::vector<std::string>& values, const std::string& out_root,
                      int jobs, bool stuck_seed_policy);

double quantile(std::vector<double> xs, double q);

}  // namespace pcattn
