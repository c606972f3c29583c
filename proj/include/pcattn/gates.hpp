#pragma once

#include <cmath>
#include <string>

#include "pcattn/tensor.hpp"

namespace pcattn {

// Scalar gate vocabulary. sigmoid..relu act elementwise on the biased score;
// screen and softmax_abs are row-level constructions that live in the cell
// forwards and only appear here for classification.
enum class GateKind {
  sigmoid,
  screen,
  softmax_abs,
  tanh1,
  softplus,
  cubic,
  clamped_relu,
  relu,
};

const char* gate_kind_name(GateKind k);
GateKind gate_kind_from_name(const std::string& name);
bool gate_is_elementwise(GateKind k);

struct GateSpec {
  GateKind kind = GateKind::sigmoid;
  double bias = 0.0;       // learnable; init -log(N) for elementwise kinds
  double threshold = 0.0;  // screen only
};

// Core activation on the biased score u = s + b. Single source of truth for
// both the scalar API and the tape op.
template <typename T>
inline T gate_fn(GateKind k, T u) {
  switch (k) {
    case GateKind::sigmoid:
      if (u >= T(0)) return T(1) / (T(1) + std::exp(-u));
      return std::exp(u) / (T(1) + std::exp(u));
    case GateKind::tanh1:
      return std::tanh(u) + T(1);
    case GateKind::softplus:
      if (u > T(30)) return u;
      if (u < T(-30)) return std::exp(u);
      return std::log1p(std::exp(u));
    case GateKind::cubic:
      return u + u * u * u / T(6);
    case GateKind::clamped_relu:
      return u < T(0) ? T(0) : (u > T(1) ? T(1) : u);
    case GateKind::relu:
      return u > T(0) ? u : T(0);
    default:
      throw std::invalid_argument("gate_fn: row-level gate has no scalar form");
  }
}

// Analytic derivative; right-hand derivative at kinks (relu at 0, clamp
// corners).
template <typename T>
inline T gate_fn_grad(GateKind k, T u) {
  switch (k) {
    case GateKind::sigmoid: {
      const T y = gate_fn(k, u);
      return y * (T(1) - y);
    }
    case GateKind::tanh1: {
      // sech^2 via cosh keeps the tail nonzero where 1 - tanh^2 would round
      // to exact zero
      const T c = std::cosh(u);
      return T(1) / (c * c);
    }
    case GateKind::softplus:
      return gate_fn(GateKind::sigmoid, u);
    case GateKind::cubic:
      return T(1) + u * u / T(2);
    case GateKind::clamped_relu:
      return (u >= T(0) && u < T(1)) ? T(1) : T(0);
    case GateKind::relu:
      return u >= T(0) ? T(1) : T(0);
    default:
      throw std::invalid_argument("gate_fn_grad: row-level gate has no scalar form");
  }
}

double gate_eval(const GateSpec& spec, double s);
double gate_grad(const GateSpec& spec, double s);

// Tape op applying an elementwise gate to biased scores.
template <typename T>
RealTensor<T> gate_apply(RealTensor<T> biased_scores, GateKind kind) {
  return unary("gate_apply", biased_scores, [kind](T u) { return gate_fn(kind, u); },
               [kind](T u, T) { return gate_fn_grad(kind, u); });
}

enum class CondStatus { satisfied, partial, violated };
const char* cond_status_name(CondStatus s);

// C1..C4 audit of a gate on the operating range [-sqrt(d), sqrt(d)].
struct GateConditionVerdict {
  bool c1 = true;
  CondStatus c2 = CondStatus::satisfied;
  CondStatus c3 = CondStatus::satisfied;
  bool c4 = true;
  double bound_m = 0.0;            // max |f(s+b)| over the operating range
  double bound_m_zero_bias = 0.0;  // same with b = 0
  double min_grad = 0.0;           // min |f'| over the range (biased)
  double range_lo = 0.0;
  double range_hi = 0.0;
};

// m_threshold splits benign boundedness from a fatal one (softplus vs cubic);
// grad_floor is only used for the reported min-gradient. The C3 verdict is
// driven by the existence of an exactly-zero-gradient subinterval, not by
// smooth tails that dip below the floor.
GateConditionVerdict classify_gate(const GateSpec& spec, int d, int n,
                                   double m_threshold = 8.0, double grad_floor = 1e-6);

}  // namespace pcattn
