#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "pcattn/tensor.hpp"

namespace pcattn {

struct CMat {
  int64_t rows = 0, cols = 0;
  std::vector<std::complex<double>> data;

  CMat() = default;
  CMat(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c)) {}
  std::complex<double>& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
  const std::complex<double>& at(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * cols + j)];
  }
};

namespace detail {

// Naive 1-D DFT down each axis; sizes here are tiny (t <= 28) so O(t^3)
// total is fine and keeps the dependency surface at zero.
inline void dft_rows(CMat& m, double sign) {
  const double two_pi = 6.283185307179586476925287;
  CMat out(m.rows, m.cols);
  for (int64_t i = 0; i < m.rows; ++i)
    for (int64_t k = 0; k < m.cols; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (int64_t j = 0; j < m.cols; ++j) {
        const double ang = sign * two_pi * static_cast<double>(k * j) / static_cast<double>(m.cols);
        acc += m.at(i, j) * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out.at(i, k) = acc;
    }
  m = std::move(out);
}

inline void transpose(CMat& m) {
  CMat out(m.cols, m.rows);
  for (int64_t i = 0; i < m.rows; ++i)
    for (int64_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
  m = std::move(out);
}

}  // namespace detail

// Unnormalised 2-D DFT of a square real matrix.
inline CMat fft2(const Array<double>& x) {
  if (x.rows() != x.cols()) throw std::invalid_argument("fft2: input must be square");
  CMat m(x.rows(), x.cols());
  for (size_t i = 0; i < x.data.size(); ++i) m.data[i] = {x.data[i], 0.0};
  detail::dft_rows(m, -1.0);
  detail::transpose(m);
  detail::dft_rows(m, -1.0);
  detail::transpose(m);
  return m;
}

// Inverse with the 1/t^2 factor, so ifft2(fft2(x)) == x.
inline CMat ifft2(const CMat& x) {
  if (x.rows != x.cols) throw std::invalid_argument("ifft2: input must be square");
  CMat m = x;
  detail::dft_rows(m, 1.0);
  detail::transpose(m);
  detail::dft_rows(m, 1.0);
  detail::transpose(m);
  const double inv = 1.0 / static_cast<double>(x.rows * x.cols);
  for (auto& v : m.data) v *= inv;
  return m;
}

}  // namespace pcattn
