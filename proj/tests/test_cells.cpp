#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "pcattn/cells.hpp"
#include "support.hpp"

using namespace pcattn;
using testsup::random_array;

namespace {

struct CellFixture {
  CellConfig cfg;
  ParamStore<double> store;
  CellParams params;

  CellFixture(CellName name, int dim, int heads, int dim_head, int bias_n, uint64_t seed) {
    cfg.cell = name;
    cfg.dim = dim;
    cfg.heads = heads;
    cfg.dim_head = dim_head;
    cfg.bias_seq_len = bias_n;
    Rng rng(seed);
    params = init_cell_params(cfg, store, rng);
  }
};

Array<double> phase_rotate(const Array<double>& re, const Array<double>& im, double phi, bool want_re) {
  Array<double> out(re.rows(), re.cols());
  const double c = std::cos(phi), s = std::sin(phi);
  for (size_t i = 0; i < re.data.size(); ++i)
    out.data[i] = want_re ? c * re.data[i] - s * im.data[i] : s * re.data[i] + c * im.data[i];
  return out;
}

// || cell(e^{i phi} X) - e^{i phi} cell(X) || / max(||cell(X)||, tiny)
double phase_residual(CellFixture& f, const Array<double>& xre, const Array<double>& xim, double phi) {
  Tape<double> t;
  auto w = bind_all(t, f.store, false);
  auto y0 = cell_forward(f.cfg, f.params, w, make_complex(t.leaf(xre, false), t.leaf(xim, false)));
  auto y1 = cell_forward(f.cfg, f.params, w,
                         make_complex(t.leaf(phase_rotate(xre, xim, phi, true), false),
                                      t.leaf(phase_rotate(xre, xim, phi, false), false)));
  const double c = std::cos(phi), s = std::sin(phi);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < y0.re.value().size(); ++i) {
    const double er = c * y0.re.value()[i] - s * y0.im.value()[i];
    const double ei = s * y0.re.value()[i] + c * y0.im.value()[i];
    num += (y1.re.value()[i] - er) * (y1.re.value()[i] - er) +
           (y1.im.value()[i] - ei) * (y1.im.value()[i] - ei);
    den += y0.re.value()[i] * y0.re.value()[i] + y0.im.value()[i] * y0.im.value()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace

TEST_CASE("single-token sigmoid cell with identity weights") {
  // dim = heads = dim_head = 1, all projections 1, N = 1 so the bias is 0:
  // score = 1 -> alpha = sigma(1), out = sigma(1) * x
  CellFixture f(CellName::complex_sigmoid, 1, 1, 1, 1, 0);
  f.store[f.params.wq_re[0]].data = {1.0};
  f.store[f.params.wq_im[0]].data = {0.0};
  f.store[f.params.wk_re[0]].data = {1.0};
  f.store[f.params.wk_im[0]].data = {0.0};
  f.store[f.params.wv_re[0]].data = {1.0};
  f.store[f.params.wv_im[0]].data = {0.0};
  f.store[f.params.wo_re].data = {1.0};
  f.store[f.params.wo_im].data = {0.0};
  CHECK(f.store[f.params.gate_bias[0]].data[0] == doctest::Approx(0.0));

  Tape<double> t;
  auto w = bind_all(t, f.store, false);
  auto x = make_complex(t.leaf(Array<double>::scalar(1.0), false),
                        t.leaf(Array<double>::scalar(0.0), false));
  auto y = cell_forward(f.cfg, f.params, w, x);
  const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(y.re.value()[0] == doctest::Approx(sig1).epsilon(1e-6));
  CHECK(y.im.value()[0] == doctest::Approx(0.0));
}

TEST_CASE("global phase equivariance of every complex cell") {
  Rng rng(41);
  for (CellName name : all_cells()) {
    if (!cell_is_complex(name)) continue;
    CAPTURE(cell_name(name));
    CellFixture f(name, 32, 4, 8, 16, 1234);
    double worst = 0.0;
    for (int trial = 0; trial < 12; ++trial) {
      const double phi = trial == 0 ? 1.5707963267948966 : rng.uniform(0.0, 6.2831853);
      auto xre = random_array(16, 32, rng);
      auto xim = random_array(16, 32, rng);
      worst = std::max(worst, phase_residual(f, xre, xim, phi));
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("token non-competition: sigmoid rows do not sum to one, softmax rows do") {
  Rng rng(43);
  auto xre = random_array(16, 32, rng);
  auto xim = random_array(16, 32, rng);

  auto row_sums = [&](CellName name) {
    CellFixture f(name, 32, 4, 8, 16, 99);
    Tape<double> t;
    auto w = bind_all(t, f.store, false);
    CellTrace<double> trace;
    cell_forward(f.cfg, f.params, w, make_complex(t.leaf(xre, false), t.leaf(xim, false)), &trace);
    std::vector<double> sums;
    for (auto& a : trace.alpha) {
      const int64_t n = a.rows();
      for (int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += a.value()[i * n + j];
        sums.push_back(acc);
      }
    }
    return sums;
  };

  double max_dev = 0.0;
  for (double s : row_sums(CellName::complex_sigmoid)) max_dev = std::max(max_dev, std::abs(s - 1.0));
  CHECK(max_dev > 0.01);

  for (double s : row_sums(CellName::complex_softmax)) CHECK(std::abs(s - 1.0) <= 1e-12);
}

TEST_CASE("scores respect the Cauchy-Schwarz bound sqrt(dim_head)") {
  Rng rng(47);
  CellFixture f(CellName::complex_sigmoid, 32, 4, 8, 16, 7);
  Tape<double> t;
  auto w = bind_all(t, f.store, false);
  CellTrace<double> trace;
  auto xre = random_array(16, 32, rng, 3.0);
  auto xim = random_array(16, 32, rng, 3.0);
  cell_forward(f.cfg, f.params, w, make_complex(t.leaf(xre, false), t.leaf(xim, false)), &trace);
  const double bound = std::sqrt(8.0) + 1e-9;
  for (auto& s : trace.scores)
    for (double v : s.value()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("screen cell hand values") {
  SUBCASE("single pair above threshold: r=1, cos - t = 0.5 -> tanh(0.25)") {
    CellFixture f(CellName::complex_screen, 1, 1, 1, 1, 0);
    f.store[f.params.wq_re[0]].data = {1.0};
    f.store[f.params.wq_im[0]].data = {0.0};
    f.store[f.params.wk_re[0]].data = {1.0};
    f.store[f.params.wk_im[0]].data = {0.0};
    f.store[f.params.wv_re[0]].data = {1.0};
    f.store[f.params.wv_im[0]].data = {0.0};
    f.store[f.params.wo_re].data = {1.0};
    f.store[f.params.wo_im].data = {0.0};
    f.store[f.params.threshold[0]].data = {0.5};

    Tape<double> t;
    auto w = bind_all(t, f.store, false);
    auto x = make_complex(t.leaf(Array<double>::scalar(1.0), false),
                          t.leaf(Array<double>::scalar(0.0), false));
    auto y = cell_forward(f.cfg, f.params, w, x);
    CHECK(y.re.value()[0] == doctest::Approx(std::tanh(0.25)).epsilon(1e-6));
  }
  SUBCASE("threshold above every score screens everything to zero") {
    Rng rng(53);
    CellFixture f(CellName::complex_screen, 32, 4, 8, 16, 5);
    for (int h = 0; h < 4; ++h) f.store[f.params.threshold[h]].data = {1.5};  // cos <= 1 always
    Tape<double> t;
    auto w = bind_all(t, f.store, false);
    auto x = make_complex(t.leaf(random_array(16, 32, rng), false),
                          t.leaf(random_array(16, 32, rng), false));
    auto y = cell_forward(f.cfg, f.params, w, x);
    for (double v : y.re.value()) CHECK(v == 0.0);
    for (double v : y.im.value()) CHECK(v == 0.0);
  }
}

TEST_CASE("relu gate deletes everything when scores + bias stay negative") {
  Rng rng(59);
  // dim_head = 8 bounds scores by sqrt(8) ~ 2.83 < log(64) ~ 4.16
  CellFixture f(CellName::complex_relu, 32, 4, 8, 64, 11);
  Tape<double> t;
  auto w = bind_all(t, f.store, false);
  auto x = make_complex(t.leaf(random_array(16, 32, rng), false),
                        t.leaf(random_array(16, 32, rng), false));
  auto y = cell_forward(f.cfg, f.params, w, x);
  for (double v : y.re.value()) CHECK(v == 0.0);
  for (double v : y.im.value()) CHECK(v == 0.0);
}

TEST_CASE("real cells: softmax singleton and sigmoid closed form") {
  SUBCASE("real softmax on one token puts weight 1 on it") {
    CellFixture f(CellName::real_softmax, 4, 1, 4, 1, 0);
    Rng rng(61);
    Tape<double> t;
    auto w = bind_all(t, f.store, false);
    CellTrace<double> trace;
    cell_forward(f.cfg, f.params, w, t.leaf(random_array(1, 4, rng), false), &trace);
    CHECK(trace.alpha[0].value()[0] == doctest::Approx(1.0));
  }
  SUBCASE("real sigmoid with zero scores gives alpha = 1/(1+N)") {
    const int n = 8;
    CellFixture f(CellName::real_sigmoid, 4, 1, 4, n, 0);
    Tape<double> t;
    auto w = bind_all(t, f.store, false);
    CellTrace<double> trace;
    // zero input -> all scores zero -> alpha = sigma(-log N)
    cell_forward(f.cfg, f.params, w, t.leaf(Array<double>(n, 4), false), &trace);
    for (double a : trace.alpha[0].value())
      CHECK(a == doctest::Approx(1.0 / (1.0 + n)).epsilon(1e-12));
  }
  SUBCASE("real screen with threshold above all scores zeroes the block") {
    Rng rng(67);
    CellFixture f(CellName::real_screen, 8, 2, 4, 8, 3);
    Tape<double> t;
    auto xa = random_array(8, 8, rng, 0.1);
    for (int h = 0; h < 2; ++h) f.store[f.params.threshold[h]].data = {50.0};
    auto w = bind_all(t, f.store, false);
    auto y = cell_forward(f.cfg, f.params, w, t.leaf(xa, false));
    for (double v : y.value()) CHECK(v == 0.0);
  }
}

TEST_CASE("full-cell gradients match finite differences for all 11 cells") {
  // keep the gate inputs away from relu/clamp kinks so central differences
  // are valid; seeds below were screened for that margin
  for (CellName name : all_cells()) {
    CAPTURE(cell_name(name));
    const bool cx = cell_is_complex(name);
    const int dim = 8, heads = 2, dh = 4, n = 5;
    CellFixture f(name, dim, heads, dh, n, 1000 + static_cast<uint64_t>(name));
    Rng rng(300 + static_cast<uint64_t>(name));
    Array<double> xre = random_array(n, dim, rng), xim = random_array(n, dim, rng);

    auto loss_of = [&](ParamStore<double>& store, bool want_grads,
                       std::vector<std::vector<double>>* grads) {
      Tape<double> t;
      auto w = bind_all(t, store, want_grads);
      RealTensor<double> loss;
      if (cx) {
        auto y = cell_forward(f.cfg, f.params, w,
                              make_complex(t.leaf(xre, false), t.leaf(xim, false)));
        loss = mean_all(add(square(y.re), square(y.im)));
      } else {
        auto y = cell_forward(f.cfg, f.params, w, t.leaf(xre, false));
        loss = mean_all(square(y));
      }
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
      ParamStore<double> st = f.store;
      st.values = p;
      return loss_of(st, false, nullptr);
    };
    auto grads_fn = [&](std::vector<Array<double>>& p) {
      ParamStore<double> st = f.store;
      st.values = p;
      std::vector<std::vector<double>> g;
      loss_of(st, true, &g);
      return g;
    };
    std::vector<Array<double>> params = f.store.values;
    auto rep = testsup::check_gradients(params, value_fn, grads_fn);
    CHECK(rep.max_rel_err < 1e-4);
  }
}
