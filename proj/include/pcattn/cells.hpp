#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcattn/complex.hpp"
#include "pcattn/gates.hpp"
#include "pcattn/params.hpp"
#include "pcattn/rng.hpp"

namespace pcattn {

// The eleven attention cells: three real baselines, the six-cell comparison's
// complex members, and the five designed counterexample gates on the complex
// substrate (sigmoid doubles as the canonical member of both groups).
enum class CellName {
  real_softmax,
  real_sigmoid,
  real_screen,
  complex_softmax,
  complex_sigmoid,
  complex_screen,
  complex_tanh1,
  complex_softplus,
  complex_cubic,
  complex_clamped_relu,
  complex_relu,
};

inline const std::vector<CellName>& all_cells() {
  static const std::vector<CellName> kAll = {
      CellName::real_softmax,       CellName::real_sigmoid,  CellName::real_screen,
      CellName::complex_softmax,    CellName::complex_sigmoid, CellName::complex_screen,
      CellName::complex_tanh1,      CellName::complex_softplus, CellName::complex_cubic,
      CellName::complex_clamped_relu, CellName::complex_relu,
  };
  return kAll;
}

inline const char* cell_name(CellName c) {
  switch (c) {
    case CellName::real_softmax: return "real_softmax";
    case CellName::real_sigmoid: return "real_sigmoid";
    case CellName::real_screen: return "real_screen";
    case CellName::complex_softmax: return "complex_softmax";
    case CellName::complex_sigmoid: return "complex_sigmoid";
    case CellName::complex_screen: return "complex_screen";
    case CellName::complex_tanh1: return "complex_tanh1";
    case CellName::complex_softplus: return "complex_softplus";
    case CellName::complex_cubic: return "complex_cubic";
    case CellName::complex_clamped_relu: return "complex_clamped_relu";
    case CellName::complex_relu: return "complex_relu";
  }
  return "?";
}

inline CellName cell_from_name(const std::string& name) {
  for (CellName c : all_cells())
    if (name == cell_name(c)) return c;
  throw std::invalid_argument("unknown cell: " + name);
}

inline bool cell_is_complex(CellName c) {
  switch (c) {
    case CellName::real_softmax:
    case CellName::real_sigmoid:
    case CellName::real_screen:
      return false;
    default:
      return true;
  }
}

inline GateKind cell_gate_kind(CellName c) {
  switch (c) {
    case CellName::real_softmax:
    case CellName::complex_softmax:
      return GateKind::softmax_abs;
    case CellName::real_sigmoid:
    case CellName::complex_sigmoid:
      return GateKind::sigmoid;
    case CellName::real_screen:
    case CellName::complex_screen:
      return GateKind::screen;
    case CellName::complex_tanh1: return GateKind::tanh1;
    case CellName::complex_softplus: return GateKind::softplus;
    case CellName::complex_cubic: return GateKind::cubic;
    case CellName::complex_clamped_relu: return GateKind::clamped_relu;
    case CellName::complex_relu: return GateKind::relu;
  }
  return GateKind::sigmoid;
}

struct CellConfig {
  CellName cell = CellName::complex_sigmoid;
  int dim = 128;
  int heads = 4;
  int dim_head = 32;
  int bias_seq_len = 1024;  // N entering the -log N bias init
  double tau_init = 0.5;    // screen threshold init
  double norm_eps = 1e-12;  // L2-normalisation regulariser
  double abs_eps = 1e-24;   // guard inside |<q,k>| for the softmax cell

  double score_scale() const { return std::sqrt(static_cast<double>(dim_head)); }

  void validate() const {
    if (dim < 1 || heads < 1 || dim_head < 1)
      throw std::invalid_argument("CellConfig: dims must be positive");
    if (cell_is_complex(cell) && dim != heads * dim_head)
      throw std::invalid_argument("CellConfig: complex cells need dim == heads * dim_head");
    if (bias_seq_len < 1) throw std::invalid_argument("CellConfig: bias_seq_len must be >= 1");
  }
};

// Parameter-fair defaults: complex cells at dim=128 (heads=4, dim_head=32),
// real cells at dim=184 (heads=4, dim_head=46) so stored scalar counts match.
inline CellConfig default_cell_config(CellName name, int bias_seq_len) {
  CellConfig cfg;
  cfg.cell = name;
  cfg.bias_seq_len = bias_seq_len;
  if (!cell_is_complex(name)) {
    cfg.dim = 184;
    cfg.heads = 4;
    cfg.dim_head = 46;
  }
  return cfg;
}

// Parameter indices of one attention cell inside a ParamStore. Real cells
// leave the *_im slots at -1.
struct CellParams {
  std::vector<int> wq_re, wq_im, wk_re, wk_im, wv_re, wv_im;  // per head [dim x dim_head]
  int wo_re = -1, wo_im = -1;                                 // [heads*dim_head x dim]
  std::vector<int> gate_bias;                                 // per head [1x1]
  std::vector<int> threshold;                                 // per head [1x1] (screen)
  std::vector<int> modrelu_beta;                              // per head [1 x dim_head] (complex screen)
};

namespace detail {

template <typename T>
Array<T> gaussian_array(int64_t r, int64_t c, double stddev, Rng& rng) {
  Array<T> a(r, c);
  for (auto& x : a.data) x = static_cast<T>(rng.normal(0.0, stddev));
  return a;
}

}  // namespace detail

// Complex weights draw independent re/im components at variance 1/(2 fan_in)
// so E|w|^2 = 1/fan_in, matching the real-side scale.
template <typename T>
CellParams init_cell_params(const CellConfig& cfg, ParamStore<T>& store, Rng& rng,
                            const std::string& prefix = "cell.") {
  cfg.validate();
  CellParams p;
  const bool cx = cell_is_complex(cfg.cell);
  const GateKind gk = cell_gate_kind(cfg.cell);
  const double proj_std = cx ? std::sqrt(0.5 / cfg.dim) : std::sqrt(1.0 / cfg.dim);
  const int64_t concat = static_cast<int64_t>(cfg.heads) * cfg.dim_head;
  const double out_std = cx ? std::sqrt(0.5 / static_cast<double>(concat))
                            : std::sqrt(1.0 / static_cast<double>(concat));
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string hs = prefix + "h" + std::to_string(h) + ".";
    p.wq_re.push_back(store.add(hs + "wq.re", detail::gaussian_array<T>(cfg.dim, cfg.dim_head, proj_std, rng)));
    if (cx) p.wq_im.push_back(store.add(hs + "wq.im", detail::gaussian_array<T>(cfg.dim, cfg.dim_head, proj_std, rng)));
    p.wk_re.push_back(store.add(hs + "wk.re", detail::gaussian_array<T>(cfg.dim, cfg.dim_head, proj_std, rng)));
    if (cx) p.wk_im.push_back(store.add(hs + "wk.im", detail::gaussian_array<T>(cfg.dim, cfg.dim_head, proj_std, rng)));
    p.wv_re.push_back(store.add(hs + "wv.re", detail::gaussian_array<T>(cfg.dim, cfg.dim_head, proj_std, rng)));
    if (cx) p.wv_im.push_back(store.add(hs + "wv.im", detail::gaussian_array<T>(cfg.dim, cfg.dim_head, proj_std, rng)));
    if (gate_is_elementwise(gk)) {
      p.gate_bias.push_back(store.add(
          hs + "gate_bias",
          Array<T>::scalar(static_cast<T>(-std::log(static_cast<double>(cfg.bias_seq_len))))));
    }
    if (gk == GateKind::screen) {
      p.threshold.push_back(store.add(hs + "threshold", Array<T>::scalar(static_cast<T>(cfg.tau_init))));
      if (cx) p.modrelu_beta.push_back(store.add(hs + "modrelu_beta", Array<T>(1, cfg.dim_head)));
    }
  }
  p.wo_re = store.add(prefix + "wo.re", detail::gaussian_array<T>(concat, cfg.dim, out_std, rng));
  if (cx) p.wo_im = store.add(prefix + "wo.im", detail::gaussian_array<T>(concat, cfg.dim, out_std, rng));
  return p;
}

// Rotary tables. The complex lift multiplies coordinate m at position pos by
// exp(i pos w_m), w_m = base^(-m / dim_head); the real substrate rotates
// coordinate pairs with the standard exponent grid.
template <typename T>
struct RopeTables {
  RealTensor<T> cos_t, sin_t;
};

template <typename T>
RopeTables<T> make_rope_tables(Tape<T>& tape, int n, int dim_head, double base, bool complex_lift) {
  const int64_t width = complex_lift ? dim_head : dim_head / 2;
  Array<T> c(n, width), s(n, width);
  for (int64_t pos = 0; pos < n; ++pos)
    for (int64_t m = 0; m < width; ++m) {
      const double expo = complex_lift ? static_cast<double>(m) / dim_head
                                       : static_cast<double>(2 * m) / dim_head;
      const double omega = std::pow(base, -expo);
      const double ang = static_cast<double>(pos) * omega;
      c.at(pos, m) = static_cast<T>(std::cos(ang));
      s.at(pos, m) = static_cast<T>(std::sin(ang));
    }
  return {tape.constant(std::move(c)), tape.constant(std::move(s))};
}

// Per-head aggregation weights captured during a forward (the alpha matrix
// of the gate family, the row-softmax weights, or the squashed screen gate),
// plus the pre-bias scores feeding the gate.
template <typename T>
struct CellTrace {
  std::vector<RealTensor<T>> alpha;
  std::vector<RealTensor<T>> scores;
};

// ---------------------------------------------------------------------------
// Complex-substrate forward. X: [N x dim] -> [N x dim].
// ---------------------------------------------------------------------------
template <typename T>
ComplexTensor<T> cell_forward(const CellConfig& cfg, const CellParams& p, const Bound<T>& w,
                              ComplexTensor<T> x, const RopeTables<T>* rope = nullptr,
                              CellTrace<T>* trace = nullptr) {
  if (!cell_is_complex(cfg.cell))
    throw std::invalid_argument("cell_forward: config is a real cell, complex input given");
  if (x.cols() != cfg.dim) throw std::invalid_argument("cell_forward: input width != dim");
  const GateKind gk = cell_gate_kind(cfg.cell);
  std::vector<ComplexTensor<T>> head_outs;
  head_outs.reserve(cfg.heads);

  for (int h = 0; h < cfg.heads; ++h) {
    auto wq = make_complex(w[p.wq_re[h]], w[p.wq_im[h]]);
    auto wk = make_complex(w[p.wk_re[h]], w[p.wk_im[h]]);
    auto wv = make_complex(w[p.wv_re[h]], w[p.wv_im[h]]);
    auto q = cmatmul(x, wq);
    auto k = cmatmul(x, wk);
    auto v = cmatmul(x, wv);
    if (rope) {
      q = crotate(q, rope->cos_t, rope->sin_t);
      k = crotate(k, rope->cos_t, rope->sin_t);
    }

    RealTensor<T> alpha;
    if (gk == GateKind::softmax_abs) {
      // row-normalised weights on the magnitude of the cosine score
      auto qn = crow_l2_normalize(q, cfg.norm_eps);
      auto kn = crow_l2_normalize(k, cfg.norm_eps);
      auto sc = hermitian_rows(qn, kn);
      auto s = scale(cabs_eps(sc, cfg.abs_eps), cfg.score_scale());
      alpha = row_softmax(s);
      if (trace) {
        trace->alpha.push_back(alpha);
        trace->scores.push_back(s);
      }
      head_outs.push_back(matmul_rc(alpha, v));
    } else if (gk == GateKind::screen) {
      // r^2-weighted squared hinge on the cosine score, squashed by tanh,
      // then a phase-preserving modReLU on the aggregate
      auto qn = crow_l2_normalize(q, cfg.norm_eps);
      auto kn = crow_l2_normalize(k, cfg.norm_eps);
      auto cosre = hermitian_rows_re(qn, kn);
      auto hinge = relu(add_scalar(cosre, neg(w[p.threshold[h]])));
      auto rsq = matmul_nt(crow_sqnorm(q), crow_sqnorm(k));
      auto gbar = tanh_op(mul(rsq, square(hinge)));
      if (trace) {
        trace->alpha.push_back(gbar);
        trace->scores.push_back(cosre);
      }
      auto u = matmul_rc(gbar, v);
      head_outs.push_back(cmodrelu(u, w[p.modrelu_beta[h]]));
    } else {
      // elementwise gate on the scaled cosine score; no row normalisation,
      // so rows do not compete for mass
      auto qn = crow_l2_normalize(q, cfg.norm_eps);
      auto kn = crow_l2_normalize(k, cfg.norm_eps);
      auto s = scale(hermitian_rows_re(qn, kn), cfg.score_scale());
      alpha = gate_apply(add_scalar(s, w[p.gate_bias[h]]), gk);
      if (trace) {
        trace->alpha.push_back(alpha);
        trace->scores.push_back(s);
      }
      head_outs.push_back(matmul_rc(alpha, v));
    }
  }

  auto cat = cconcat_cols(head_outs);
  return cmatmul(cat, make_complex(w[p.wo_re], w[p.wo_im]));
}

// ---------------------------------------------------------------------------
// Real-substrate forward. X: [N x dim] -> [N x dim].
// ---------------------------------------------------------------------------
template <typename T>
RealTensor<T> cell_forward(const CellConfig& cfg, const CellParams& p, const Bound<T>& w,
                           RealTensor<T> x, const RopeTables<T>* rope = nullptr,
                           CellTrace<T>* trace = nullptr) {
  if (cell_is_complex(cfg.cell))
    throw std::invalid_argument("cell_forward: config is a complex cell, real input given");
  if (x.cols() != cfg.dim) throw std::invalid_argument("cell_forward: input width != dim");
  const GateKind gk = cell_gate_kind(cfg.cell);
  std::vector<RealTensor<T>> head_outs;
  head_outs.reserve(cfg.heads);

  for (int h = 0; h < cfg.heads; ++h) {
    auto q = matmul(x, w[p.wq_re[h]]);
    auto k = matmul(x, w[p.wk_re[h]]);
    auto v = matmul(x, w[p.wv_re[h]]);
    if (rope) {
      q = rope_rotate_pairs(q, rope->cos_t, rope->sin_t);
      k = rope_rotate_pairs(k, rope->cos_t, rope->sin_t);
    }
    auto s = scale(matmul_nt(q, k), 1.0 / cfg.score_scale());

    RealTensor<T> alpha;
    if (trace) trace->scores.push_back(s);
    if (gk == GateKind::softmax_abs) {
      alpha = row_softmax(s);
    } else if (gk == GateKind::screen) {
      // squared hinge + tanh squash; the real side has no modReLU, the
      // ReLU^2 feed-forward carries the nonlinearity
      alpha = tanh_op(square(relu(add_scalar(s, neg(w[p.threshold[h]])))));
    } else {
      alpha = gate_apply(add_scalar(s, w[p.gate_bias[h]]), gk);
    }
    if (trace) trace->alpha.push_back(alpha);
    head_outs.push_back(matmul(alpha, v));
  }

  return matmul(concat_cols(head_outs), w[p.wo_re]);
}

// Convenience overloads for rope-free calls with a trace.
template <typename T>
ComplexTensor<T> cell_forward(const CellConfig& cfg, const CellParams& p, const Bound<T>& w,
                              ComplexTensor<T> x, CellTrace<T>* trace) {
  return cell_forward(cfg, p, w, x, static_cast<const RopeTables<T>*>(nullptr), trace);
}

template <typename T>
RealTensor<T> cell_forward(const CellConfig& cfg, const CellParams& p, const Bound<T>& w,
                           RealTensor<T> x, CellTrace<T>* trace) {
  return cell_forward(cfg, p, w, x, static_cast<const RopeTables<T>*>(nullptr), trace);
}

}  // namespace pcattn
