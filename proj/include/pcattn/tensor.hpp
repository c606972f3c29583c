#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pcattn {

// ---------------------------------------------------------------------------
// Plain storage. Everything in this engine is a row-major 2-D array; vectors
// are [n x 1] and scalars [1 x 1].
// ---------------------------------------------------------------------------

struct Shape {
  int64_t rows = 0;
  int64_t cols = 0;

  int64_t numel() const { return rows * cols; }
  bool operator==(const Shape& o) const { return rows == o.rows && cols == o.cols; }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

template <typename T>
struct Array {
  Shape shape;
  std::vector<T> data;

  Array() = default;
  Array(int64_t r, int64_t c) : shape{r, c}, data(static_cast<size_t>(r * c), T(0)) {}
  Array(Shape s, std::vector<T> d) : shape(s), data(std::move(d)) {
    if (shape.numel() != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("Array: shape/data size mismatch");
  }

  static Array scalar(T v) {
    Array a(1, 1);
    a.data[0] = v;
    return a;
  }
  static Array full(int64_t r, int64_t c, T v) {
    Array a(r, c);
    for (auto& x : a.data) x = v;
    return a;
  }

  T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape.cols + j)]; }
  T at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape.cols + j)]; }
  int64_t rows() const { return shape.rows; }
  int64_t cols() const { return shape.cols; }

  template <typename U>
  Array<U> cast() const {
    Array<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Dense kernels. gemm_* accumulate into c; the k-loop is blocked by 4 to cut
// traffic on c and keep FMA chains full. Summation order is fixed, so results
// are bit-reproducible run to run.
// ---------------------------------------------------------------------------

namespace detail {

// c[m x p] += a[m x k] * b[k x p]
template <typename T>
void gemm_nn_acc(const T* __restrict a, const T* __restrict b, T* __restrict c,
                 int64_t m, int64_t k, int64_t p) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * p;
    int64_t kk = 0;
    for (; kk + 4 <= k; kk += 4) {
      const T a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
      const T* b0 = b + kk * p;
      const T* b1 = b0 + p;
      const T* b2 = b1 + p;
      const T* b3 = b2 + p;
      for (int64_t j = 0; j < p; ++j)
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void transpose_into(const T* __restrict a, T* __restrict at, int64_t r, int64_t c) {
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) at[j * r + i] = a[i * c + j];
}

template <typename T>
std::vector<T>& gemm_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// c[m x p] += a[m x k] * b[p x k]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
  auto& bt = gemm_scratch<T>();
  bt.resize(static_cast<size_t>(k * p));
  transpose_into(b, bt.data(), p, k);
  gemm_nn_acc(a, bt.data(), c, m, k, p);
}

// c[m x p] += a[k x m]^T * b[k x p]
template <typename T>
void gemm_tn_acc(const T* __restrict a, const T* __restrict b, T* __restrict c,
                 int64_t k, int64_t m, int64_t p) {
  int64_t kk = 0;
  for (; kk + 4 <= k; kk += 4) {
    const T* a0 = a + kk * m;
    const T* a1 = a0 + m;
    const T* a2 = a1 + m;
    const T* a3 = a2 + m;
    const T* b0 = b + kk * p;
    const T* b1 = b0 + p;
    const T* b2 = b1 + p;
    const T* b3 = b2 + p;
    for (int64_t i = 0; i < m; ++i) {
      const T v0 = a0[i], v1 = a1[i], v2 = a2[i], v3 = a3[i];
      T* crow = c + i * p;
      for (int64_t j = 0; j < p; ++j)
        crow[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
    }
  }
  for (; kk < k; ++kk) {
    const T* arow = a + kk * m;
    const T* brow = b + kk * p;
    for (int64_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse-mode tape. Ops append nodes, so parent ids are always smaller than
// child ids and a reverse scan over ids is a valid reverse topological order
// that touches each node exactly once.
// ---------------------------------------------------------------------------

template <typename T>
class Tape;

template <typename T>
struct RealTensor {
  Tape<T>* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  int64_t rows() const { return shape().rows; }
  int64_t cols() const { return shape().cols; }
  int64_t numel() const { return shape().numel(); }
  const std::vector<T>& value() const;
  bool requires_grad() const;
};

template <typename T>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily during backward
    std::vector<int32_t> parents;
    std::function<void(Tape&, Node&)> backward;
    bool requires_grad = false;
  };

  explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

  RealTensor<T> leaf(const Array<T>& a, bool requires_grad) {
    Node n;
    n.shape = a.shape;
    n.value = a.data;
    n.requires_grad = requires_grad;
    return push(std::move(n), "leaf");
  }

  RealTensor<T> constant(Array<T> a) {
    Node n;
    n.shape = a.shape;
    n.value = std::move(a.data);
    n.requires_grad = false;
    return push(std::move(n), "constant");
  }

  RealTensor<T> emit(const char* name, Shape shape, std::vector<T> value,
                     std::initializer_list<RealTensor<T>> parents,
                     std::function<void(Tape&, Node&)> bwd) {
    Node n;
    n.shape = shape;
    n.value = std::move(value);
    bool req = false;
    n.parents.reserve(parents.size());
    for (const auto& p : parents) {
      if (p.tape != this) throw std::invalid_argument(std::string(name) + ": tensor from another tape");
      n.parents.push_back(p.id);
      req = req || nodes_[p.id].requires_grad;
    }
    n.requires_grad = req;
    if (req) n.backward = std::move(bwd);
    return push(std::move(n), name);
  }

  RealTensor<T> emit(const char* name, Shape shape, std::vector<T> value,
                     const std::vector<RealTensor<T>>& parents,
                     std::function<void(Tape&, Node&)> bwd) {
    Node n;
    n.shape = shape;
    n.value = std::move(value);
    bool req = false;
    n.parents.reserve(parents.size());
    for (const auto& p : parents) {
      if (p.tape != this) throw std::invalid_argument(std::string(name) + ": tensor from another tape");
      n.parents.push_back(p.id);
      req = req || nodes_[p.id].requires_grad;
    }
    n.requires_grad = req;
    if (req) n.backward = std::move(bwd);
    return push(std::move(n), name);
  }

  // Seeds d(loss)/d(loss) = 1 and replays the tape once in reverse order.
  void backward(RealTensor<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss from another tape");
    Node& ln = nodes_[loss.id];
    if (ln.shape.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!ln.requires_grad) return;  // nothing reaches a differentiable leaf
    ln.grad.assign(1, T(1));
    for (int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n);
    }
  }

  // Gradient of a node; empty vector when none was accumulated.
  const std::vector<T>& grad(RealTensor<T> v) const {
    static const std::vector<T> kEmpty;
    if (v.tape != this) throw std::invalid_argument("grad: tensor from another tape");
    const auto& g = nodes_[v.id].grad;
    return g.empty() ? kEmpty : g;
  }

  // Returns the grad buffer of a parent, or nullptr when the parent does not
  // take gradients. Allocates (zeroed) on first use.
  T* maybe_grad(int32_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad.data();
  }

  Node& node(int32_t id) { return nodes_[id]; }
  const Node& node(int32_t id) const { return nodes_[id]; }
  size_t size() const { return nodes_.size(); }
  bool check_finite() const { return check_finite_; }
  void set_check_finite(bool v) { check_finite_ = v; }

 private:
  RealTensor<T> push(Node&& n, const char* name) {
    if (check_finite_) {
      for (const T& x : n.value) {
        if (!std::isfinite(static_cast<double>(x)))
          throw std::runtime_error(std::string("non-finite value in op '") + name + "'");
      }
    }
    nodes_.push_back(std::move(n));
    return RealTensor<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

template <typename T>
const Shape& RealTensor<T>::shape() const {
  return tape->node(id).shape;
}
template <typename T>
const std::vector<T>& RealTensor<T>::value() const {
  return tape->node(id).value;
}
template <typename T>
bool RealTensor<T>::requires_grad() const {
  return tape->node(id).requires_grad;
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
void require_same_shape(const char* op, const RealTensor<T>& a, const RealTensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
}
}  // namespace detail

template <typename T>
RealTensor<T> add(RealTensor<T> a, RealTensor<T> b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> v(a.value());
  const auto& bv = b.value();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  return a.tape->emit("add", a.shape(), std::move(v), {a, b},
                      [](Tape<T>& t, typename Tape<T>::Node& self) {
                        for (int pi = 0; pi < 2; ++pi)
                          if (T* g = t.maybe_grad(self.parents[pi]))
                            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                      });
}

template <typename T>
RealTensor<T> sub(RealTensor<T> a, RealTensor<T> b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> v(a.value());
  const auto& bv = b.value();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  return a.tape->emit("sub", a.shape(), std::move(v), {a, b},
                      [](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0]))
                          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                        if (T* g = t.maybe_grad(self.parents[1]))
                          for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
                      });
}

template <typename T>
RealTensor<T> mul(RealTensor<T> a, RealTensor<T> b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> v(a.value());
  const auto& bv = b.value();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  return a.tape->emit("mul", a.shape(), std::move(v), {a, b},
                      [](Tape<T>& t, typename Tape<T>::Node& self) {
                        const auto& av = t.node(self.parents[0]).value;
                        const auto& bv2 = t.node(self.parents[1]).value;
                        if (T* g = t.maybe_grad(self.parents[0]))
                          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv2[i];
                        if (T* g = t.maybe_grad(self.parents[1]))
                          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
                      });
}

template <typename T>
RealTensor<T> scale(RealTensor<T> a, double s) {
  std::vector<T> v(a.value());
  const T ts = static_cast<T>(s);
  for (auto& x : v) x *= ts;
  return a.tape->emit("scale", a.shape(), std::move(v), {a},
                      [ts](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0]))
                          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ts;
                      });
}

template <typename T>
RealTensor<T> neg(RealTensor<T> a) {
  return scale(a, -1.0);
}

// y = x + s, s a [1x1] tensor broadcast over all of x
template <typename T>
RealTensor<T> add_scalar(RealTensor<T> x, RealTensor<T> s) {
  if (s.numel() != 1) throw std::invalid_argument("add_scalar: s must be scalar");
  std::vector<T> v(x.value());
  const T sv = s.value()[0];
  for (auto& e : v) e += sv;
  return x.tape->emit("add_scalar", x.shape(), std::move(v), {x, s},
                      [](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0]))
                          for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                        if (T* g = t.maybe_grad(self.parents[1])) {
                          T acc = T(0);
                          for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i];
                          g[0] += acc;
                        }
                      });
}

template <typename T>
RealTensor<T> matmul(RealTensor<T> a, RealTensor<T> b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dims disagree " + a.shape().str() + " vs " +
                                b.shape().str());
  const int64_t m = a.rows(), k = a.cols(), p = b.cols();
  std::vector<T> v(static_cast<size_t>(m * p), T(0));
  detail::gemm_nn_acc(a.value().data(), b.value().data(), v.data(), m, k, p);
  return a.tape->emit("matmul", Shape{m, p}, std::move(v), {a, b},
                      [m, k, p](Tape<T>& t, typename Tape<T>::Node& self) {
                        const auto& av = t.node(self.parents[0]).value;
                        const auto& bv = t.node(self.parents[1]).value;
                        if (T* ga = t.maybe_grad(self.parents[0]))
                          detail::gemm_nt_acc(self.grad.data(), bv.data(), ga, m, p, k);
                        if (T* gb = t.maybe_grad(self.parents[1]))
                          detail::gemm_tn_acc(av.data(), self.grad.data(), gb, m, k, p);
                      });
}

// y = a * b^T, with a [m x k], b [p x k]
template <typename T>
RealTensor<T> matmul_nt(RealTensor<T> a, RealTensor<T> b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: inner dims disagree " + a.shape().str() + " vs " +
                                b.shape().str());
  const int64_t m = a.rows(), k = a.cols(), p = b.rows();
  std::vector<T> v(static_cast<size_t>(m * p), T(0));
  detail::gemm_nt_acc(a.value().data(), b.value().data(), v.data(), m, k, p);
  return a.tape->emit("matmul_nt", Shape{m, p}, std::move(v), {a, b},
                      [m, k, p](Tape<T>& t, typename Tape<T>::Node& self) {
                        const auto& av = t.node(self.parents[0]).value;
                        const auto& bv = t.node(self.parents[1]).value;
                        // dA = dC * B ; dB = dC^T * A
                        if (T* ga = t.maybe_grad(self.parents[0]))
                          detail::gemm_nn_acc(self.grad.data(), bv.data(), ga, m, p, k);
                        if (T* gb = t.maybe_grad(self.parents[1]))
                          detail::gemm_tn_acc(self.grad.data(), av.data(), gb, m, p, k);
                      });
}

template <typename T>
RealTensor<T> row_sum(RealTensor<T> x) {
  const int64_t n = x.rows(), d = x.cols();
  std::vector<T> v(static_cast<size_t>(n), T(0));
  const auto& xv = x.value();
  for (int64_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (int64_t j = 0; j < d; ++j) acc += xv[static_cast<size_t>(i * d + j)];
    v[static_cast<size_t>(i)] = acc;
  }
  return x.tape->emit("row_sum", Shape{n, 1}, std::move(v), {x},
                      [n, d](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0]))
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t j = 0; j < d; ++j)
                              g[i * d + j] += self.grad[static_cast<size_t>(i)];
                      });
}

template <typename T>
RealTensor<T> sum_all(RealTensor<T> x) {
  T acc = T(0);
  for (const T& v : x.value()) acc += v;
  return x.tape->emit("sum_all", Shape{1, 1}, {acc}, {x},
                      [](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0])) {
                          const size_t n = t.node(self.parents[0]).value.size();
                          for (size_t i = 0; i < n; ++i) g[i] += self.grad[0];
                        }
                      });
}

template <typename T>
RealTensor<T> mean_all(RealTensor<T> x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// y_ij = x_ij * v_i, v a column [n x 1]
template <typename T>
RealTensor<T> scale_rows(RealTensor<T> x, RealTensor<T> v) {
  if (v.rows() != x.rows() || v.cols() != 1)
    throw std::invalid_argument("scale_rows: v must be [rows x 1]");
  const int64_t n = x.rows(), d = x.cols();
  std::vector<T> out(x.value());
  const auto& vv = v.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(i * d + j)] *= vv[static_cast<size_t>(i)];
  return x.tape->emit("scale_rows", x.shape(), std::move(out), {x, v},
                      [n, d](Tape<T>& t, typename Tape<T>::Node& self) {
                        const auto& xv = t.node(self.parents[0]).value;
                        const auto& vv2 = t.node(self.parents[1]).value;
                        if (T* gx = t.maybe_grad(self.parents[0]))
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t j = 0; j < d; ++j)
                              gx[i * d + j] += self.grad[static_cast<size_t>(i * d + j)] * vv2[static_cast<size_t>(i)];
                        if (T* gv = t.maybe_grad(self.parents[1]))
                          for (int64_t i = 0; i < n; ++i) {
                            T acc = T(0);
                            for (int64_t j = 0; j < d; ++j)
                              acc += self.grad[static_cast<size_t>(i * d + j)] * xv[static_cast<size_t>(i * d + j)];
                            gv[i] += acc;
                          }
                      });
}

// y_ij = x_ij + v_j, v a row [1 x d]
template <typename T>
RealTensor<T> add_cols(RealTensor<T> x, RealTensor<T> v) {
  if (v.rows() != 1 || v.cols() != x.cols())
    throw std::invalid_argument("add_cols: v must be [1 x cols]");
  const int64_t n = x.rows(), d = x.cols();
  std::vector<T> out(x.value());
  const auto& vv = v.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(i * d + j)] += vv[static_cast<size_t>(j)];
  return x.tape->emit("add_cols", x.shape(), std::move(out), {x, v},
                      [n, d](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* gx = t.maybe_grad(self.parents[0]))
                          for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
                        if (T* gv = t.maybe_grad(self.parents[1]))
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t j = 0; j < d; ++j) gv[j] += self.grad[static_cast<size_t>(i * d + j)];
                      });
}

// y_ij = x_ij * v_j, v a row [1 x d]
template <typename T>
RealTensor<T> mul_cols(RealTensor<T> x, RealTensor<T> v) {
  if (v.rows() != 1 || v.cols() != x.cols())
    throw std::invalid_argument("mul_cols: v must be [1 x cols]");
  const int64_t n = x.rows(), d = x.cols();
  std::vector<T> out(x.value());
  const auto& vv = v.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(i * d + j)] *= vv[static_cast<size_t>(j)];
  return x.tape->emit("mul_cols", x.shape(), std::move(out), {x, v},
                      [n, d](Tape<T>& t, typename Tape<T>::Node& self) {
                        const auto& xv = t.node(self.parents[0]).value;
                        const auto& vv2 = t.node(self.parents[1]).value;
                        if (T* gx = t.maybe_grad(self.parents[0]))
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t j = 0; j < d; ++j)
                              gx[i * d + j] += self.grad[static_cast<size_t>(i * d + j)] * vv2[static_cast<size_t>(j)];
                        if (T* gv = t.maybe_grad(self.parents[1]))
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t j = 0; j < d; ++j)
                              gv[j] += self.grad[static_cast<size_t>(i * d + j)] * xv[static_cast<size_t>(i * d + j)];
                      });
}

// Generic elementwise op; df(x, y) is evaluated at the forward point.
template <typename T, typename F, typename DF>
RealTensor<T> unary(const char* name, RealTensor<T> x, F f, DF df) {
  std::vector<T> v(x.value());
  for (auto& e : v) e = f(e);
  return x.tape->emit(name, x.shape(), std::move(v), {x},
                      [df](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0])) {
                          const auto& xv = t.node(self.parents[0]).value;
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            g[i] += self.grad[i] * df(xv[i], self.value[i]);
                        }
                      });
}

template <typename T>
RealTensor<T> sigmoid(RealTensor<T> x) {
  return unary(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
RealTensor<T> tanh_op(RealTensor<T> x) {
  return unary("tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
RealTensor<T> relu(RealTensor<T> x) {
  return unary("relu", x, [](T v) { return v > T(0) ? v : T(0); },
               [](T v, T) { return v >= T(0) ? T(1) : T(0); });
}

template <typename T>
RealTensor<T> softplus(RealTensor<T> x) {
  return unary(
      "softplus", x,
      [](T v) {
        if (v > T(30)) return v;
        if (v < T(-30)) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](T v, T) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      });
}

template <typename T>
RealTensor<T> square(RealTensor<T> x) {
  return unary("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
RealTensor<T> sqrt_eps(RealTensor<T> x, double eps) {
  const T te = static_cast<T>(eps);
  return unary("sqrt_eps", x, [te](T v) { return std::sqrt(v + te); },
               [](T, T y) { return T(0.5) / y; });
}

template <typename T>
RealTensor<T> rsqrt_eps(RealTensor<T> x, double eps) {
  const T te = static_cast<T>(eps);
  return unary("rsqrt_eps", x, [te](T v) { return T(1) / std::sqrt(v + te); },
               [](T, T y) { return T(-0.5) * y * y * y; });
}

template <typename T>
RealTensor<T> recip(RealTensor<T> x) {
  return unary("recip", x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

// Row-wise softmax over the last axis.
template <typename T>
RealTensor<T> row_softmax(RealTensor<T> x) {
  const int64_t n = x.rows(), d = x.cols();
  std::vector<T> v(x.value());
  for (int64_t i = 0; i < n; ++i) {
    T* row = v.data() + i * d;
    T mx = row[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    T acc = T(0);
    for (int64_t j = 0; j < d; ++j) {
      row[j] = std::exp(row[j] - mx);
      acc += row[j];
    }
    const T inv = T(1) / acc;
    for (int64_t j = 0; j < d; ++j) row[j] *= inv;
  }
  return x.tape->emit("row_softmax", x.shape(), std::move(v), {x},
                      [n, d](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0]))
                          for (int64_t i = 0; i < n; ++i) {
                            const T* y = self.value.data() + i * d;
                            const T* dy = self.grad.data() + i * d;
                            T dot = T(0);
                            for (int64_t j = 0; j < d; ++j) dot += dy[j] * y[j];
                            for (int64_t j = 0; j < d; ++j) g[i * d + j] += (dy[j] - dot) * y[j];
                          }
                      });
}

// Embedding lookup: one table row per id. Backward scatter-adds.
template <typename T>
RealTensor<T> gather_rows(RealTensor<T> table, std::vector<int32_t> ids) {
  const int64_t v = table.rows(), d = table.cols();
  const int64_t n = static_cast<int64_t>(ids.size());
  std::vector<T> out(static_cast<size_t>(n * d));
  const auto& tv = table.value();
  for (int64_t i = 0; i < n; ++i) {
    const int32_t r = ids[static_cast<size_t>(i)];
    if (r < 0 || r >= v) throw std::invalid_argument("gather_rows: id out of range");
    std::memcpy(out.data() + i * d, tv.data() + static_cast<int64_t>(r) * d, sizeof(T) * d);
  }
  return table.tape->emit("gather_rows", Shape{n, d}, std::move(out), {table},
                          [ids = std::move(ids), d](Tape<T>& t, typename Tape<T>::Node& self) {
                            if (T* g = t.maybe_grad(self.parents[0]))
                              for (size_t i = 0; i < ids.size(); ++i) {
                                const int64_t r = ids[i];
                                for (int64_t j = 0; j < d; ++j)
                                  g[r * d + j] += self.grad[i * d + j];
                              }
                          });
}

// Row selection from an activation (same mechanics as gather_rows).
template <typename T>
RealTensor<T> select_rows(RealTensor<T> x, std::vector<int32_t> rows) {
  return gather_rows(x, std::move(rows));
}

template <typename T>
RealTensor<T> concat_cols(const std::vector<RealTensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int64_t n = parts[0].rows();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw std::invalid_argument("concat_cols: row mismatch");
    total += p.cols();
  }
  std::vector<T> out(static_cast<size_t>(n * total));
  std::vector<int64_t> widths;
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t d = p.cols();
    const auto& pv = p.value();
    for (int64_t i = 0; i < n; ++i)
      std::memcpy(out.data() + i * total + off, pv.data() + i * d, sizeof(T) * d);
    widths.push_back(d);
    off += d;
  }
  return parts[0].tape->emit("concat_cols", Shape{n, total}, std::move(out), parts,
                             [n, total, widths](Tape<T>& t, typename Tape<T>::Node& self) {
                               int64_t o = 0;
                               for (size_t pi = 0; pi < widths.size(); ++pi) {
                                 const int64_t d = widths[pi];
                                 if (T* g = t.maybe_grad(self.parents[pi]))
                                   for (int64_t i = 0; i < n; ++i)
                                     for (int64_t j = 0; j < d; ++j)
                                       g[i * d + j] += self.grad[i * total + o + j];
                                 o += d;
                               }
                             });
}

// Rotates coordinate pairs (2a, 2a+1) of each row by the given tables,
// cos/sin: [n x d/2]. Orthogonal map, so backward is rotation by -angle.
template <typename T>
RealTensor<T> rope_rotate_pairs(RealTensor<T> x, RealTensor<T> cos_t, RealTensor<T> sin_t) {
  const int64_t n = x.rows(), d = x.cols();
  if (d % 2 != 0) throw std::invalid_argument("rope_rotate_pairs: odd width");
  const int64_t h = d / 2;
  if (cos_t.rows() != n || cos_t.cols() != h || sin_t.rows() != n || sin_t.cols() != h)
    throw std::invalid_argument("rope_rotate_pairs: table shape mismatch");
  std::vector<T> out(static_cast<size_t>(n * d));
  const auto& xv = x.value();
  const auto& cv = cos_t.value();
  const auto& sv = sin_t.value();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < h; ++a) {
      const T c = cv[static_cast<size_t>(i * h + a)], s = sv[static_cast<size_t>(i * h + a)];
      const T x0 = xv[static_cast<size_t>(i * d + 2 * a)], x1 = xv[static_cast<size_t>(i * d + 2 * a + 1)];
      out[static_cast<size_t>(i * d + 2 * a)] = x0 * c - x1 * s;
      out[static_cast<size_t>(i * d + 2 * a + 1)] = x0 * s + x1 * c;
    }
  return x.tape->emit("rope_rotate_pairs", x.shape(), std::move(out), {x, cos_t, sin_t},
                      [n, d, h](Tape<T>& t, typename Tape<T>::Node& self) {
                        if (T* g = t.maybe_grad(self.parents[0])) {
                          const auto& cv2 = t.node(self.parents[1]).value;
                          const auto& sv2 = t.node(self.parents[2]).value;
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t a = 0; a < h; ++a) {
                              const T c = cv2[static_cast<size_t>(i * h + a)];
                              const T s = sv2[static_cast<size_t>(i * h + a)];
                              const T g0 = self.grad[static_cast<size_t>(i * d + 2 * a)];
                              const T g1 = self.grad[static_cast<size_t>(i * d + 2 * a + 1)];
                              g[i * d + 2 * a] += g0 * c + g1 * s;
                              g[i * d + 2 * a + 1] += -g0 * s + g1 * c;
                            }
                        }
                      });
}

// Mean cross-entropy over rows of logits with integer targets. Fused with
// log-sum-exp for stability.
template <typename T>
RealTensor<T> ce_mean(RealTensor<T> logits, std::vector<int32_t> targets) {
  const int64_t m = logits.rows(), c = logits.cols();
  if (static_cast<int64_t>(targets.size()) != m)
    throw std::invalid_argument("ce_mean: target count mismatch");
  const auto& lv = logits.value();
  T loss = T(0);
  for (int64_t i = 0; i < m; ++i) {
    const T* row = lv.data() + i * c;
    const int32_t tgt = targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= c) throw std::invalid_argument("ce_mean: target out of range");
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T acc = T(0);
    for (int64_t j = 0; j < c; ++j) acc += std::exp(row[j] - mx);
    loss += std::log(acc) + mx - row[tgt];
  }
  loss /= static_cast<T>(m);
  return logits.tape->emit("ce_mean", Shape{1, 1}, {loss}, {logits},
                           [targets = std::move(targets), m, c](Tape<T>& t, typename Tape<T>::Node& self) {
                             if (T* g = t.maybe_grad(self.parents[0])) {
                               const auto& lv2 = t.node(self.parents[0]).value;
                               const T gscale = self.grad[0] / static_cast<T>(m);
                               for (int64_t i = 0; i < m; ++i) {
                                 const T* row = lv2.data() + i * c;
                                 T mx = row[0];
                                 for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                                 T acc = T(0);
                                 for (int64_t j = 0; j < c; ++j) acc += std::exp(row[j] - mx);
                                 const T inv = T(1) / acc;
                                 for (int64_t j = 0; j < c; ++j) {
                                   T p = std::exp(row[j] - mx) * inv;
                                   if (j == targets[static_cast<size_t>(i)]) p -= T(1);
                                   g[i * c + j] += gscale * p;
                                 }
                               }
                             }
                           });
}

// Mean binary cross-entropy with logits against a 0/1 bit matrix.
template <typename T>
RealTensor<T> bce_logits_mean(RealTensor<T> logits, std::vector<int32_t> bits) {
  const int64_t m = logits.rows(), c = logits.cols();
  if (static_cast<int64_t>(bits.size()) != static_cast<size_t>(m * c))
    throw std::invalid_argument("bce_logits_mean: bit count mismatch");
  const auto& lv = logits.value();
  T loss = T(0);
  for (size_t i = 0; i < lv.size(); ++i) {
    const T x = lv[i];
    const T y = static_cast<T>(bits[i]);
    loss += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<T>(m * c);
  return logits.tape->emit("bce_logits_mean", Shape{1, 1}, {loss}, {logits},
                           [bits = std::move(bits), m, c](Tape<T>& t, typename Tape<T>::Node& self) {
                             if (T* g = t.maybe_grad(self.parents[0])) {
                               const auto& lv2 = t.node(self.parents[0]).value;
                               const T gscale = self.grad[0] / static_cast<T>(m * c);
                               for (size_t i = 0; i < lv2.size(); ++i) {
                                 const T x = lv2[i];
                                 const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                                                       : std::exp(x) / (T(1) + std::exp(x));
                                 g[i] += gscale * (s - static_cast<T>(bits[i]));
                               }
                             }
                           });
}

template <typename T>
RealTensor<T> operator+(RealTensor<T> a, RealTensor<T> b) { return add(a, b); }
template <typename T>
RealTensor<T> operator-(RealTensor<T> a, RealTensor<T> b) { return sub(a, b); }
template <typename T>
RealTensor<T> operator*(RealTensor<T> a, RealTensor<T> b) { return mul(a, b); }

}  // namespace pcattn
