#pragma once

// Shared test helpers: finite-difference gradient oracle and random tensor
// construction. The oracle only depends on re-running a forward closure, so
// it stays independent of the tape's backward implementation.

#include <cmath>
#include <functional>
#include <vector>

#include "pcattn/complex.hpp"
#include "pcattn/rng.hpp"
#include "pcattn/tensor.hpp"

namespace pcattn::testsup {

inline Array<double> random_array(int64_t r, int64_t c, Rng& rng, double stddev = 1.0) {
  Array<double> a(r, c);
  for (auto& x : a.data) x = rng.normal(0.0, stddev);
  return a;
}

struct FdReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int checked = 0;
};

// Central finite differences of a scalar-valued forward against the tape
// gradients, sweeping every entry of every parameter array. `forward` must
// rebuild the graph from `params` on each call.
inline FdReport check_gradients(std::vector<Array<double>>& params,
                                const std::function<double(std::vector<Array<double>>&)>& loss_value,
                                const std::function<std::vector<std::vector<double>>(
                                    std::vector<Array<double>>&)>& tape_grads,
                                double h_scale = 1e-5) {
  FdReport rep;
  const auto grads = tape_grads(params);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (size_t i = 0; i < params[pi].data.size(); ++i) {
      const double orig = params[pi].data[i];
      const double h = h_scale * std::max(1.0, std::abs(orig));
      params[pi].data[i] = orig + h;
      const double up = loss_value(params);
      params[pi].data[i] = orig - h;
      const double dn = loss_value(params);
      params[pi].data[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = grads[pi].empty() ? 0.0 : grads[pi][i];
      const double abs_err = std::abs(fd - ad);
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-6});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, abs_err / denom);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace pcattn::testsup
