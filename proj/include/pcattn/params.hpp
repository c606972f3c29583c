#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcattn/tensor.hpp"

namespace pcattn {

// Flat registry of named parameter arrays. Models hold indices into a store,
// which keeps the optimiser, gradient clipping, tape binding and
// finite-difference sweeps generic.
template <typename T>
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Array<T>> values;

  int add(std::string name, Array<T> v) {
    names.push_back(std::move(name));
    values.push_back(std::move(v));
    return static_cast<int>(values.size()) - 1;
  }

  Array<T>& operator[](int i) { return values[static_cast<size_t>(i)]; }
  const Array<T>& operator[](int i) const { return values[static_cast<size_t>(i)]; }
  size_t size() const { return values.size(); }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& v : values) n += v.shape.numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.names = names;
    out.values.reserve(values.size());
    for (const auto& v : values) out.values.push_back(v.template cast<U>());
    return out;
  }
};

// One tape leaf per store entry.
template <typename T>
struct Bound {
  std::vector<RealTensor<T>> leaves;

  RealTensor<T> operator[](int i) const {
    if (i < 0 || static_cast<size_t>(i) >= leaves.size())
      throw std::invalid_argument("Bound: parameter index out of range");
    return leaves[static_cast<size_t>(i)];
  }
};

template <typename T>
Bound<T> bind_all(Tape<T>& tape, const ParamStore<T>& store, bool requires_grad) {
  Bound<T> b;
  b.leaves.reserve(store.size());
  for (const auto& v : store.values) b.leaves.push_back(tape.leaf(v, requires_grad));
  return b;
}

// Per-parameter gradients read back from a tape (zeros when detached or
// unreached).
template <typename T>
std::vector<std::vector<T>> collect_grads(Tape<T>& tape, const Bound<T>& bound) {
  std::vector<std::vector<T>> out;
  out.reserve(bound.leaves.size());
  for (const auto& leaf : bound.leaves) {
    const auto& g = tape.grad(leaf);
    if (g.empty())
      out.emplace_back(leaf.value().size(), T(0));
    else
      out.push_back(g);
  }
  return out;
}

}  // namespace pcattn
