#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "pcattn/cells.hpp"

namespace pcattn {

// Full trainable stack: embedding, depth x (pre-norm cell + pre-norm FFN with
// residuals), real-logit readout.
struct StackConfig {
  CellConfig cell;
  int depth = 4;
  int ff_mult = 4;
  bool rope = true;
  double rope_base = 10000.0;
  double norm_eps = 1e-8;

  // io: a discrete token stream (vocab > 0), a complex value channel
  // (value_channels > 0), or both summed into the embedding
  int vocab = 0;
  int value_channels = 0;
  int n_classes = 2;

  void validate() const {
    cell.validate();
    if (depth < 1) throw std::invalid_argument("StackConfig: depth must be >= 1");
    if (ff_mult < 1) throw std::invalid_argument("StackConfig: ff_mult must be >= 1");
    if (vocab == 0 && value_channels == 0)
      throw std::invalid_argument("StackConfig: need vocab or value_channels");
    if (n_classes < 1) throw std::invalid_argument("StackConfig: n_classes must be >= 1");
    if (rope && cell_is_complex(cell.cell) == false && cell.dim_head % 2 != 0)
      throw std::invalid_argument("StackConfig: real rope needs even dim_head");
  }
};

struct BlockParams {
  int norm1 = -1, norm2 = -1;  // per-dim gains [1 x dim]
  CellParams cell;
  int ffn_w1_re = -1, ffn_w1_im = -1;  // [dim x hid]
  int ffn_w2_re = -1, ffn_w2_im = -1;  // [hid x dim]
  int ffn_beta = -1;                   // modReLU bias [1 x hid] (complex side)
};

struct StackParams {
  int tok_re = -1, tok_im = -1;  // [vocab x dim]
  int in_re = -1, in_im = -1;    // value projection [value_channels x dim]
                                 // (real substrate: [2*value_channels x dim])
  std::vector<BlockParams> blocks;
  int readout_w = -1;  // [2*dim x classes] complex, [dim x classes] real
  int readout_b = -1;  // [1 x classes]
};

template <typename T>
struct StackModel {
  StackConfig cfg;
  ParamStore<T> store;
  StackParams params;

  template <typename U>
  StackModel<U> cast() const {
    return {cfg, store.template cast<U>(), params};
  }
};

template <typename T>
StackModel<T> build_stack(const StackConfig& cfg, uint64_t seed) {
  cfg.validate();
  StackModel<T> m;
  m.cfg = cfg;
  Rng rng(mix_seed(seed, /*stream=*/0x57ac, 0));
  const bool cx = cell_is_complex(cfg.cell.cell);
  const int dim = cfg.cell.dim;
  const int hid = dim * cfg.ff_mult;
  auto& st = m.store;

  if (cfg.vocab > 0) {
    const double estd = cx ? std::sqrt(0.5) : 1.0;
    m.params.tok_re = st.add("embed.tok.re", detail::gaussian_array<T>(cfg.vocab, dim, estd, rng));
    if (cx) m.params.tok_im = st.add("embed.tok.im", detail::gaussian_array<T>(cfg.vocab, dim, estd, rng));
  }
  if (cfg.value_channels > 0) {
    if (cx) {
      const double istd = std::sqrt(0.5 / cfg.value_channels);
      m.params.in_re = st.add("embed.in.re", detail::gaussian_array<T>(cfg.value_channels, dim, istd, rng));
      m.params.in_im = st.add("embed.in.im", detail::gaussian_array<T>(cfg.value_channels, dim, istd, rng));
    } else {
      const double istd = std::sqrt(1.0 / (2.0 * cfg.value_channels));
      m.params.in_re = st.add("embed.in.re", detail::gaussian_array<T>(2 * cfg.value_channels, dim, istd, rng));
    }
  }

  for (int l = 0; l < cfg.depth; ++l) {
    BlockParams b;
    const std::string bp = "block" + std::to_string(l) + ".";
    b.norm1 = st.add(bp + "norm1.gain", Array<T>::full(1, dim, T(1)));
    b.cell = init_cell_params(cfg.cell, st, rng, bp + "attn.");
    b.norm2 = st.add(bp + "norm2.gain", Array<T>::full(1, dim, T(1)));
    const double w1_std = cx ? std::sqrt(0.5 / dim) : std::sqrt(1.0 / dim);
    const double w2_std = cx ? std::sqrt(0.5 / hid) : std::sqrt(1.0 / hid);
    b.ffn_w1_re = st.add(bp + "ffn.w1.re", detail::gaussian_array<T>(dim, hid, w1_std, rng));
    b.ffn_w2_re = st.add(bp + "ffn.w2.re", detail::gaussian_array<T>(hid, dim, w2_std, rng));
    if (cx) {
      b.ffn_w1_im = st.add(bp + "ffn.w1.im", detail::gaussian_array<T>(dim, hid, w1_std, rng));
      b.ffn_w2_im = st.add(bp + "ffn.w2.im", detail::gaussian_array<T>(hid, dim, w2_std, rng));
      b.ffn_beta = st.add(bp + "ffn.beta", Array<T>(1, hid));
    }
    m.params.blocks.push_back(b);
  }

  const int ro_in = cx ? 2 * dim : dim;
  m.params.readout_w = st.add("readout.w",
                              detail::gaussian_array<T>(ro_in, cfg.n_classes, std::sqrt(1.0 / ro_in), rng));
  m.params.readout_b = st.add("readout.b", Array<T>(1, cfg.n_classes));
  return m;
}

// FFN halves. complex: W2 . modReLU(W1 x); real: W2 . relu(W1 x)^2.
template <typename T>
ComplexTensor<T> ffn_forward(const StackModel<T>& m, const BlockParams& b, const Bound<T>& w,
                             ComplexTensor<T> x) {
  auto h = cmatmul(x, make_complex(w[b.ffn_w1_re], w[b.ffn_w1_im]));
  auto a = cmodrelu(h, w[b.ffn_beta]);
  return cmatmul(a, make_complex(w[b.ffn_w2_re], w[b.ffn_w2_im]));
}

template <typename T>
RealTensor<T> ffn_forward(const StackModel<T>& m, const BlockParams& b, const Bound<T>& w,
                          RealTensor<T> x) {
  auto h = matmul(x, w[b.ffn_w1_re]);
  return matmul(square(relu(h)), w[b.ffn_w2_re]);
}

// Pre-norm residual trunk on an already-embedded complex sequence.
template <typename T>
ComplexTensor<T> stack_blocks(const StackModel<T>& m, const Bound<T>& w, ComplexTensor<T> x,
                              const RopeTables<T>* rope) {
  for (const auto& b : m.params.blocks) {
    auto attn = cell_forward(m.cfg.cell, b.cell, w, crmsnorm(x, w[b.norm1], m.cfg.norm_eps), rope);
    x = cadd(x, attn);
    auto f = ffn_forward(m, b, w, crmsnorm(x, w[b.norm2], m.cfg.norm_eps));
    x = cadd(x, f);
  }
  return x;
}

template <typename T>
RealTensor<T> stack_blocks(const StackModel<T>& m, const Bound<T>& w, RealTensor<T> x,
                           const RopeTables<T>* rope) {
  for (const auto& b : m.params.blocks) {
    auto attn = cell_forward(m.cfg.cell, b.cell, w, rmsnorm(x, w[b.norm1], m.cfg.norm_eps), rope);
    x = add(x, attn);
    auto f = ffn_forward(m, b, w, rmsnorm(x, w[b.norm2], m.cfg.norm_eps));
    x = add(x, f);
  }
  return x;
}

// Model input: token ids and/or a complex value channel, length n each.
struct SeqInput {
  int n = 0;
  std::vector<int32_t> tokens;                 // empty when unused
  std::vector<std::complex<double>> values;    // empty when unused; channel-major rows
};

template <typename T>
RopeTables<T> stack_rope_tables(const StackModel<T>& m, Tape<T>& tape, int n) {
  return make_rope_tables(tape, n, m.cfg.cell.dim_head, m.cfg.rope_base,
                          cell_is_complex(m.cfg.cell.cell));
}

// Embeds a SeqInput: token table lookup plus a linear map of the value
// channel, summed when both exist.
template <typename T>
ComplexTensor<T> embed_complex(const StackModel<T>& m, Tape<T>& tape, const Bound<T>& w,
                               const SeqInput& in) {
  const int dim = m.cfg.cell.dim;
  ComplexTensor<T> x;
  bool have = false;
  if (!in.tokens.empty()) {
    if (m.params.tok_re < 0) throw std::invalid_argument("embed: no token table in this stack");
    x = make_complex(gather_rows(w[m.params.tok_re], in.tokens),
                     gather_rows(w[m.params.tok_im], in.tokens));
    have = true;
  }
  if (!in.values.empty()) {
    if (m.params.in_re < 0) throw std::invalid_argument("embed: no value projection in this stack");
    const int c = m.cfg.value_channels;
    if (static_cast<int>(in.values.size()) != in.n * c)
      throw std::invalid_argument("embed: value channel size mismatch");
    Array<T> vre(in.n, c), vim(in.n, c);
    for (int i = 0; i < in.n; ++i)
      for (int j = 0; j < c; ++j) {
        vre.at(i, j) = static_cast<T>(in.values[static_cast<size_t>(i * c + j)].real());
        vim.at(i, j) = static_cast<T>(in.values[static_cast<size_t>(i * c + j)].imag());
      }
    auto vals = make_complex(tape.constant(std::move(vre)), tape.constant(std::move(vim)));
    auto proj = cmatmul(vals, make_complex(w[m.params.in_re], w[m.params.in_im]));
    x = have ? cadd(x, proj) : proj;
    have = true;
  }
  if (!have) throw std::invalid_argument("embed: empty input");
  (void)dim;
  return x;
}

template <typename T>
RealTensor<T> embed_real(const StackModel<T>& m, Tape<T>& tape, const Bound<T>& w,
                         const SeqInput& in) {
  RealTensor<T> x;
  bool have = false;
  if (!in.tokens.empty()) {
    if (m.params.tok_re < 0) throw std::invalid_argument("embed: no token table in this stack");
    x = gather_rows(w[m.params.tok_re], in.tokens);
    have = true;
  }
  if (!in.values.empty()) {
    if (m.params.in_re < 0) throw std::invalid_argument("embed: no value projection in this stack");
    const int c = m.cfg.value_channels;
    if (static_cast<int>(in.values.size()) != in.n * c)
      throw std::invalid_argument("embed: value channel size mismatch");
    // (re, im) become two real channels
    Array<T> v(in.n, 2 * c);
    for (int i = 0; i < in.n; ++i)
      for (int j = 0; j < c; ++j) {
        v.at(i, 2 * j) = static_cast<T>(in.values[static_cast<size_t>(i * c + j)].real());
        v.at(i, 2 * j + 1) = static_cast<T>(in.values[static_cast<size_t>(i * c + j)].imag());
      }
    auto proj = matmul(tape.constant(std::move(v)), w[m.params.in_re]);
    x = have ? add(x, proj) : proj;
    have = true;
  }
  if (!have) throw std::invalid_argument("embed: empty input");
  return x;
}

// Pre-readout features and class logits. Complex features reach the real
// readout as a (re, im) concatenation so phase survives into the logits.
template <typename T>
RealTensor<T> stack_logits(const StackModel<T>& m, Tape<T>& tape, const Bound<T>& w,
                           const SeqInput& in) {
  const RopeTables<T> tables = m.cfg.rope ? stack_rope_tables(m, tape, in.n) : RopeTables<T>{};
  const RopeTables<T>* rope = m.cfg.rope ? &tables : nullptr;
  RealTensor<T> feats;
  if (cell_is_complex(m.cfg.cell.cell)) {
    auto x = stack_blocks(m, w, embed_complex(m, tape, w, in), rope);
    feats = concat_cols(std::vector<RealTensor<T>>{x.re, x.im});
  } else {
    feats = stack_blocks(m, w, embed_real(m, tape, w, in), rope);
  }
  return add_cols(matmul(feats, w[m.params.readout_w]), w[m.params.readout_b]);
}

}  // namespace pcattn
