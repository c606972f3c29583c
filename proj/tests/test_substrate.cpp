#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "pcattn/substrate.hpp"
#include "support.hpp"

using namespace pcattn;
using testsup::random_array;

namespace {

StackConfig micro_stack_cfg(CellName cell, int dim, int heads, int dh, int depth, int vocab,
                            int value_channels, int n_classes, int bias_n) {
  StackConfig cfg;
  cfg.cell.cell = cell;
  cfg.cell.dim = dim;
  cfg.cell.heads = heads;
  cfg.cell.dim_head = dh;
  cfg.cell.bias_seq_len = bias_n;
  cfg.depth = depth;
  cfg.vocab = vocab;
  cfg.value_channels = value_channels;
  cfg.n_classes = n_classes;
  return cfg;
}

}  // namespace

TEST_CASE("complex rmsnorm") {
  SUBCASE("unit-magnitude token with gain 1 is unchanged") {
    Tape<double> t;
    // coordinates e^{i theta}: mean |x|^2 = 1
    Array<double> re(1, 4), im(1, 4);
    const double th[4] = {0.3, -1.2, 2.2, 0.9};
    for (int j = 0; j < 4; ++j) {
      re.at(0, j) = std::cos(th[j]);
      im.at(0, j) = std::sin(th[j]);
    }
    auto x = make_complex(t.leaf(re, false), t.leaf(im, false));
    auto y = crmsnorm(x, t.leaf(Array<double>::full(1, 4, 1.0), false), 1e-30);
    for (int j = 0; j < 4; ++j) {
      CHECK(y.re.value()[j] == doctest::Approx(re.at(0, j)).epsilon(1e-12));
      CHECK(y.im.value()[j] == doctest::Approx(im.at(0, j)).epsilon(1e-12));
    }
  }
  SUBCASE("token 3+4i at d=1 normalises to magnitude 1") {
    Tape<double> t;
    auto x = make_complex(t.leaf(Array<double>::scalar(3.0), false),
                          t.leaf(Array<double>::scalar(4.0), false));
    auto y = crmsnorm(x, t.leaf(Array<double>::full(1, 1, 1.0), false), 1e-30);
    const double mag = std::hypot(y.re.value()[0], y.im.value()[0]);
    CHECK(mag == doctest::Approx(1.0).epsilon(1e-12));
    // phase untouched
    CHECK(y.re.value()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y.im.value()[0] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("phase equivariance") {
    Rng rng(2);
    auto re = random_array(3, 5, rng), im = random_array(3, 5, rng);
    const double phi = 0.77, c = std::cos(phi), s = std::sin(phi);
    Array<double> rre(3, 5), rim(3, 5);
    for (size_t i = 0; i < re.data.size(); ++i) {
      rre.data[i] = c * re.data[i] - s * im.data[i];
      rim.data[i] = s * re.data[i] + c * im.data[i];
    }
    Tape<double> t;
    auto gain = t.leaf(Array<double>::full(1, 5, 1.3), false);
    auto y0 = crmsnorm(make_complex(t.leaf(re, false), t.leaf(im, false)), gain);
    auto y1 = crmsnorm(make_complex(t.leaf(rre, false), t.leaf(rim, false)), gain);
    for (size_t i = 0; i < re.data.size(); ++i) {
      CHECK(std::abs(y1.re.value()[i] - (c * y0.re.value()[i] - s * y0.im.value()[i])) <= 1e-12);
      CHECK(std::abs(y1.im.value()[i] - (s * y0.re.value()[i] + c * y0.im.value()[i])) <= 1e-12);
    }
  }
}

TEST_CASE("rotary tables") {
  SUBCASE("position 0 is the identity") {
    Tape<double> t;
    auto tables = make_rope_tables(t, 4, 6, 10000.0, true);
    Rng rng(3);
    auto re = random_array(4, 6, rng), im = random_array(4, 6, rng);
    auto y = crotate(make_complex(t.leaf(re, false), t.leaf(im, false)), tables.cos_t, tables.sin_t);
    for (int j = 0; j < 6; ++j) {
      CHECK(y.re.value()[j] == doctest::Approx(re.at(0, j)).epsilon(1e-12));
      CHECK(y.im.value()[j] == doctest::Approx(im.at(0, j)).epsilon(1e-12));
    }
  }
  SUBCASE("inner products depend on the position offset only") {
    Rng rng(5);
    Tape<double> t;
    auto tables = make_rope_tables(t, 16, 8, 10000.0, true);
    auto qre = random_array(1, 8, rng), qim = random_array(1, 8, rng);
    auto kre = random_array(1, 8, rng), kim = random_array(1, 8, rng);

    auto rotate_row = [&](const Array<double>& re, const Array<double>& im, int pos) {
      Array<double> ore(1, 8), oim(1, 8);
      for (int m = 0; m < 8; ++m) {
        const double c = tables.cos_t.value()[pos * 8 + m];
        const double s = tables.sin_t.value()[pos * 8 + m];
        ore.at(0, m) = c * re.at(0, m) - s * im.at(0, m);
        oim.at(0, m) = s * re.at(0, m) + c * im.at(0, m);
      }
      return std::make_pair(ore, oim);
    };
    auto inner = [&](int pq, int pk) {
      auto [qr, qi] = rotate_row(qre, qim, pq);
      auto [kr, ki] = rotate_row(kre, kim, pk);
      std::complex<double> acc(0, 0);
      for (int m = 0; m < 8; ++m) {
        const std::complex<double> a(qr.at(0, m), qi.at(0, m));
        const std::complex<double> b(kr.at(0, m), ki.at(0, m));
        acc += std::conj(a) * b;
      }
      return acc;
    };
    const auto d1 = inner(3, 5);
    const auto d2 = inner(10, 12);
    CHECK(std::abs(d1 - d2) <= 1e-10);
  }
  SUBCASE("global phase commutes with the rotation") {
    Rng rng(7);
    Tape<double> t;
    auto tables = make_rope_tables(t, 6, 4, 10000.0, true);
    auto re = random_array(6, 4, rng), im = random_array(6, 4, rng);
    const double phi = 1.1, c = std::cos(phi), s = std::sin(phi);
    Array<double> rre(6, 4), rim(6, 4);
    for (size_t i = 0; i < re.data.size(); ++i) {
      rre.data[i] = c * re.data[i] - s * im.data[i];
      rim.data[i] = s * re.data[i] + c * im.data[i];
    }
    auto y0 = crotate(make_complex(t.leaf(re, false), t.leaf(im, false)), tables.cos_t, tables.sin_t);
    auto y1 = crotate(make_complex(t.leaf(rre, false), t.leaf(rim, false)), tables.cos_t, tables.sin_t);
    for (size_t i = 0; i < re.data.size(); ++i) {
      CHECK(std::abs(y1.re.value()[i] - (c * y0.re.value()[i] - s * y0.im.value()[i])) <= 1e-12);
      CHECK(std::abs(y1.im.value()[i] - (s * y0.re.value()[i] + c * y0.im.value()[i])) <= 1e-12);
    }
  }
}

TEST_CASE("feed-forward halves") {
  SUBCASE("zero input with zero modReLU bias gives zero output") {
    auto cfg = micro_stack_cfg(CellName::complex_sigmoid, 8, 2, 4, 1, 4, 0, 3, 8);
    auto m = build_stack<double>(cfg, 1);
    Tape<double> t;
    auto w = bind_all(t, m.store, false);
    auto x = make_complex(t.leaf(Array<double>(5, 8), false), t.leaf(Array<double>(5, 8), false));
    auto y = ffn_forward(m, m.params.blocks[0], w, x);
    for (double v : y.re.value()) CHECK(v == 0.0);
    for (double v : y.im.value()) CHECK(v == 0.0);
  }
  SUBCASE("modReLU keeps the phase of surviving coordinates") {
    Tape<double> t;
    Rng rng(9);
    auto re = random_array(4, 6, rng), im = random_array(4, 6, rng);
    Array<double> beta(1, 6);
    for (int j = 0; j < 6; ++j) beta.at(0, j) = (j % 2 == 0) ? -0.2 : 0.4;
    auto z = make_complex(t.leaf(re, false), t.leaf(im, false));
    auto y = cmodrelu(z, t.leaf(beta, false));
    for (size_t i = 0; i < re.data.size(); ++i) {
      const double mag = std::hypot(re.data[i], im.data[i]);
      const double factor = std::max(mag + beta.data[i % 6], 0.0) / mag;
      if (factor > 0) {
        const double arg_in = std::atan2(im.data[i], re.data[i]);
        const double arg_out = std::atan2(y.im.value()[i], y.re.value()[i]);
        CHECK(std::abs(arg_in - arg_out) <= 1e-12);
      } else {
        CHECK(y.re.value()[i] == 0.0);
        CHECK(y.im.value()[i] == 0.0);
      }
    }
  }
  SUBCASE("real ReLU^2: -2 -> 0 and 3 -> 9 before the second matmul") {
    Tape<double> t;
    auto x = t.leaf(Array<double>({1, 2}, {-2.0, 3.0}), false);
    auto y = square(relu(x));
    CHECK(y.value()[0] == 0.0);
    CHECK(y.value()[1] == 9.0);
  }
}

TEST_CASE("stack construction") {
  SUBCASE("minimal stack runs and stays finite") {
    auto cfg = micro_stack_cfg(CellName::complex_sigmoid, 2, 1, 2, 1, 3, 0, 2, 4);
    auto m = build_stack<double>(cfg, 7);
    Tape<double> t(true);  // throws on non-finite
    auto w = bind_all(t, m.store, false);
    SeqInput in;
    in.n = 4;
    in.tokens = {0, 1, 2, 1};
    auto logits = stack_logits(m, t, w, in);
    CHECK(logits.rows() == 4);
    CHECK(logits.cols() == 2);
  }
  SUBCASE("isolation architecture builds at dim=128 depth=4 and reports parameters") {
    auto cfg = micro_stack_cfg(CellName::complex_sigmoid, 128, 4, 32, 4, 17, 0, 16, 120);
    auto m = build_stack<double>(cfg, 0);
    // four blocks of complex attention + 4x FFN, embeddings and readout
    CHECK(m.store.total_scalars() > 1'000'000);
    CHECK(m.store.total_scalars() < 3'000'000);
  }
  SUBCASE("parameter fairness: real dim=184 within 5% of complex dim=128") {
    auto ccfg = micro_stack_cfg(CellName::complex_sigmoid, 128, 4, 32, 4, 17, 0, 16, 120);
    auto rcfg = micro_stack_cfg(CellName::real_softmax, 184, 4, 46, 4, 17, 0, 16, 120);
    const auto cn = build_stack<double>(ccfg, 0).store.total_scalars();
    const auto rn = build_stack<double>(rcfg, 0).store.total_scalars();
    const double rel = std::abs(static_cast<double>(rn - cn)) / static_cast<double>(cn);
    CHECK(rel <= 0.05);
  }
}

TEST_CASE("full-stack phase equivariance of pre-readout features") {
  // direct complex input (value channel), so the embedding is phase
  // equivariant and the whole trunk commutes with a global phase
  auto cfg = micro_stack_cfg(CellName::complex_sigmoid, 16, 4, 4, 3, 0, 1, 4, 12);
  auto m = build_stack<double>(cfg, 21);
  Rng rng(23);

  SeqInput in;
  in.n = 12;
  in.values.resize(12);
  for (auto& v : in.values) v = rng.complex_normal(1.0);

  const double phi = 2.1;
  SeqInput in_rot = in;
  for (auto& v : in_rot.values) v *= std::complex<double>(std::cos(phi), std::sin(phi));

  Tape<double> t;
  auto w = bind_all(t, m.store, false);
  auto tables = stack_rope_tables(m, t, in.n);
  auto f0 = stack_blocks(m, w, embed_complex(m, t, w, in), &tables);
  auto f1 = stack_blocks(m, w, embed_complex(m, t, w, in_rot), &tables);

  const double c = std::cos(phi), s = std::sin(phi);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < f0.re.value().size(); ++i) {
    const double er = c * f0.re.value()[i] - s * f0.im.value()[i];
    const double ei = s * f0.re.value()[i] + c * f0.im.value()[i];
    num += (f1.re.value()[i] - er) * (f1.re.value()[i] - er) +
           (f1.im.value()[i] - ei) * (f1.im.value()[i] - ei);
    den += er * er + ei * ei;
  }
  CHECK(std::sqrt(num) / std::sqrt(den) <= 1e-8);
}

TEST_CASE("depth-2 stack gradient check at dim 8") {
  auto cfg = micro_stack_cfg(CellName::complex_sigmoid, 8, 2, 4, 2, 5, 0, 3, 6);
  auto m = build_stack<double>(cfg, 31);
  SeqInput in;
  in.n = 6;
  in.tokens = {0, 3, 1, 4, 2, 2};
  const std::vector<int32_t> mask = {5};
  const std::vector<int32_t> target = {1};

  auto loss_of = [&](ParamStore<double>& store, bool want_grads,
                     std::vector<std::vector<double>>* grads) {
    Tape<double> t;
    auto w = bind_all(t, store, want_grads);
    auto logits = stack_logits(m, t, w, in);
    auto loss = ce_mean(select_rows(logits, mask), target);
    if (want_grads) {
      t.backward(loss);
      grads->clear();
      for (auto& leaf : w.leaves) {
        const auto& g = t.grad(leaf);
        grads->push_back(g.empty() ? std::vector<double>(leaf.value().size(), 0.0) : g);
      }
    }
    return loss.value()[0];
  };
  auto value_fn = [&](std::vector<Array<double>>& p) {
    ParamStore<double> st = m.store;
    st.values = p;
    return loss_of(st, false, nullptr);
  };
  auto grads_fn = [&](std::vector<Array<double>>& p) {
    ParamStore<double> st = m.store;
    st.values = p;
    std::vector<std::vector<double>> g;
    loss_of(st, true, &g);
    return g;
  };
  std::vector<Array<double>> params = m.store.values;
  auto rep = testsup::check_gradients(params, value_fn, grads_fn);
  CHECK(rep.max_rel_err < 1e-4);
}
