#include "pcattn/gates.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcattn {

const char* gate_kind_name(GateKind k) {
  switch (k) {
    case GateKind::sigmoid: return "sigmoid";
    case GateKind::screen: return "screen";
    case GateKind::softmax_abs: return "softmax_abs";
    case GateKind::tanh1: return "tanh1";
    case GateKind::softplus: return "softplus";
    case GateKind::cubic: return "cubic";
    case GateKind::clamped_relu: return "clamped_relu";
    case GateKind::relu: return "relu";
  }
  return "?";
}

GateKind gate_kind_from_name(const std::string& name) {
  for (GateKind k : {GateKind::sigmoid, GateKind::screen, GateKind::softmax_abs, GateKind::tanh1,
                     GateKind::softplus, GateKind::cubic, GateKind::clamped_relu, GateKind::relu}) {
    if (name == gate_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown gate kind: " + name);
}

bool gate_is_elementwise(GateKind k) {
  return k != GateKind::screen && k != GateKind::softmax_abs;
}

double gate_eval(const GateSpec& spec, double s) {
  return gate_fn(spec.kind, s + spec.bias);
}

double gate_grad(const GateSpec& spec, double s) {
  return gate_fn_grad(spec.kind, s + spec.bias);
}

const char* cond_status_name(CondStatus s) {
  switch (s) {
    case CondStatus::satisfied: return "satisfied";
    case CondStatus::partial: return "partial";
    case CondStatus::violated: return "violated";
  }
  return "?";
}

namespace {

bool unbounded_on_reals(GateKind k) {
  switch (k) {
    case GateKind::softplus:
    case GateKind::cubic:
    case GateKind::relu:
      return true;
    default:
      return false;
  }
}

double max_abs_gate(GateKind k, double bias, double lo, double hi, int samples) {
  double m = 0.0;
  for (int i = 0; i <= samples; ++i) {
    const double s = lo + (hi - lo) * static_cast<double>(i) / samples;
    m = std::max(m, std::abs(gate_fn(k, s + bias)));
  }
  return m;
}

}  // namespace

GateConditionVerdict classify_gate(const GateSpec& spec, int d, int n,
                                   double m_threshold, double grad_floor) {
  if (d < 1 || n < 2) throw std::invalid_argument("classify_gate: need d >= 1, n >= 2");
  (void)n;  // bias carries the N dependence; N itself only fixes the init

  GateConditionVerdict v;
  const double r = std::sqrt(static_cast<double>(d));
  v.range_lo = -r;
  v.range_hi = r;
  v.c1 = true;  // every gate in the vocabulary outputs a real scalar

  if (spec.kind == GateKind::softmax_abs) {
    // Row-normalised weights in [0,1]; smooth; couples the whole row.
    v.c2 = CondStatus::satisfied;
    v.c3 = CondStatus::satisfied;
    v.c4 = false;
    v.bound_m = 1.0;
    v.bound_m_zero_bias = 1.0;
    v.min_grad = 0.0;
    return v;
  }
  if (spec.kind == GateKind::screen) {
    // tanh-squashed squared hinge: bounded by 1, gradient exactly zero below
    // the threshold and positive above it.
    v.c2 = CondStatus::satisfied;
    v.c3 = CondStatus::partial;
    v.c4 = true;
    v.bound_m = 1.0;
    v.bound_m_zero_bias = 1.0;
    v.min_grad = 0.0;
    return v;
  }

  const int kSamples = 20000;
  v.bound_m = max_abs_gate(spec.kind, spec.bias, v.range_lo, v.range_hi, kSamples);
  v.bound_m_zero_bias = max_abs_gate(spec.kind, 0.0, v.range_lo, v.range_hi, kSamples);

  if (v.bound_m > m_threshold) {
    v.c2 = CondStatus::violated;
  } else if (unbounded_on_reals(spec.kind)) {
    v.c2 = CondStatus::partial;  // bounded only thanks to the operating range
  } else {
    v.c2 = CondStatus::satisfied;
  }

  // C3: look for a contiguous stretch of exactly-zero gradient. Smooth gates
  // have tails far below grad_floor inside the biased range (e.g. tanh1 at
  // s = -sqrt(d)), so the floor cannot be the verdict criterion; deletion
  // regions are.
  double min_grad = std::numeric_limits<double>::infinity();
  int zero_run = 0, max_zero_run = 0;
  for (int i = 0; i <= kSamples; ++i) {
    const double s = v.range_lo + (v.range_hi - v.range_lo) * static_cast<double>(i) / kSamples;
    const double g = std::abs(gate_fn_grad(spec.kind, s + spec.bias));
    min_grad = std::min(min_grad, g);
    if (g == 0.0) {
      ++zero_run;
      max_zero_run = std::max(max_zero_run, zero_run);
    } else {
      zero_run = 0;
    }
  }
  v.min_grad = min_grad;
  if (max_zero_run >= kSamples / 100) {
    v.c3 = CondStatus::violated;
  } else {
    v.c3 = CondStatus::satisfied;
  }
  (void)grad_floor;

  v.c4 = true;  // all scalar kinds act per (i, j) pair
  return v;
}

}  // namespace pcattn
