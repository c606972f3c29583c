#pragma once

#include "pcattn/tensor.hpp"

namespace pcattn {

// A complex tensor is a (re, im) pair of equal-shape real tensors on one tape.
// All complex ops below are compositions of real tape ops, so reverse-mode
// gradients fall out of the real engine; the loss stays real throughout,
// which makes this equivalent to Wirtinger-gradient descent.
template <typename T>
struct ComplexTensor {
  RealTensor<T> re, im;

  const Shape& shape() const { return re.shape(); }
  int64_t rows() const { return re.rows(); }
  int64_t cols() const { return re.cols(); }
};

template <typename T>
ComplexTensor<T> make_complex(RealTensor<T> re, RealTensor<T> im) {
  if (re.shape() != im.shape())
    throw std::invalid_argument("make_complex: re/im shape mismatch");
  return {re, im};
}

template <typename T>
ComplexTensor<T> cadd(ComplexTensor<T> a, ComplexTensor<T> b) {
  return {add(a.re, b.re), add(a.im, b.im)};
}

template <typename T>
ComplexTensor<T> csub(ComplexTensor<T> a, ComplexTensor<T> b) {
  return {sub(a.re, b.re), sub(a.im, b.im)};
}

template <typename T>
ComplexTensor<T> cscale(ComplexTensor<T> a, double s) {
  return {scale(a.re, s), scale(a.im, s)};
}

// (a.b).re = ar*br - ai*bi ; (a.b).im = ar*bi + ai*br. Uses the 3-product
// form t3 - t1 - t2 for the imaginary part to save one GEMM.
template <typename T>
ComplexTensor<T> cmatmul(ComplexTensor<T> a, ComplexTensor<T> b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("cmatmul: inner dims disagree " + a.shape().str() + " vs " +
                                b.shape().str());
  auto t1 = matmul(a.re, b.re);
  auto t2 = matmul(a.im, b.im);
  auto t3 = matmul(add(a.re, a.im), add(b.re, b.im));
  return {sub(t1, t2), sub(sub(t3, t1), t2)};
}

// real matrix times complex matrix (real gate weights against complex values)
template <typename T>
ComplexTensor<T> matmul_rc(RealTensor<T> a, ComplexTensor<T> b) {
  return {matmul(a, b.re), matmul(a, b.im)};
}

// Hermitian pair products between rows of a and rows of b, conjugating the
// FIRST argument: out_ij = <a_i, b_j> = sum_m conj(a_im) * b_jm.
template <typename T>
ComplexTensor<T> hermitian_rows(ComplexTensor<T> a, ComplexTensor<T> b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("hermitian_rows: width mismatch");
  auto re = add(matmul_nt(a.re, b.re), matmul_nt(a.im, b.im));
  auto im = sub(matmul_nt(a.re, b.im), matmul_nt(a.im, b.re));
  return {re, im};
}

// Real part only (two GEMMs instead of four).
template <typename T>
RealTensor<T> hermitian_rows_re(ComplexTensor<T> a, ComplexTensor<T> b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("hermitian_rows_re: width mismatch");
  return add(matmul_nt(a.re, b.re), matmul_nt(a.im, b.im));
}

// Scalar Hermitian inner product of two [1 x d] (or [d x 1]) vectors.
template <typename T>
ComplexTensor<T> hermitian_inner(ComplexTensor<T> a, ComplexTensor<T> b) {
  if (a.shape() != b.shape() || (a.rows() != 1 && a.cols() != 1))
    throw std::invalid_argument("hermitian_inner: vectors of equal length required");
  auto re = sum_all(add(mul(a.re, b.re), mul(a.im, b.im)));
  auto im = sum_all(sub(mul(a.re, b.im), mul(a.im, b.re)));
  return {re, im};
}

// Squared row norms sum_m |x_im|^2 as a column vector.
template <typename T>
RealTensor<T> crow_sqnorm(ComplexTensor<T> x) {
  return row_sum(add(square(x.re), square(x.im)));
}

// Row L2 norms, eps-regularised.
template <typename T>
RealTensor<T> crow_norm(ComplexTensor<T> x, double eps) {
  return sqrt_eps(crow_sqnorm(x), eps);
}

// Divides each row by sqrt(|row|^2 + eps). The eps keeps the zero row at
// zero instead of NaN; trained rows have norms far above sqrt(eps).
template <typename T>
ComplexTensor<T> crow_l2_normalize(ComplexTensor<T> x, double eps) {
  auto inv = rsqrt_eps(crow_sqnorm(x), eps);
  return {scale_rows(x.re, inv), scale_rows(x.im, inv)};
}

// Elementwise |z| with an eps inside the sqrt to keep the gradient finite
// near zero.
template <typename T>
RealTensor<T> cabs_eps(ComplexTensor<T> x, double eps) {
  return sqrt_eps(add(square(x.re), square(x.im)), eps);
}

// modReLU: z * max(|z| + beta, 0) / |z|. Zeroes small magnitudes, leaves the
// phase of every surviving coordinate untouched. beta is [1 x d], broadcast
// over rows.
template <typename T>
ComplexTensor<T> cmodrelu(ComplexTensor<T> z, RealTensor<T> beta, double eps = 1e-12) {
  auto m = cabs_eps(z, eps);
  auto factor = mul(relu(add_cols(m, beta)), recip(m));
  return {mul(z.re, factor), mul(z.im, factor)};
}

// Complex RMSNorm: x_i / sqrt(mean_m |x_im|^2 + eps), then a real per-dim
// gain. Phase of every coordinate is unchanged.
template <typename T>
ComplexTensor<T> crmsnorm(ComplexTensor<T> x, RealTensor<T> gain, double eps = 1e-8) {
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  auto inv = rsqrt_eps(scale(crow_sqnorm(x), inv_d), eps);
  return {mul_cols(scale_rows(x.re, inv), gain), mul_cols(scale_rows(x.im, inv), gain)};
}

// Real RMSNorm with per-dim gain.
template <typename T>
RealTensor<T> rmsnorm(RealTensor<T> x, RealTensor<T> gain, double eps = 1e-8) {
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  auto inv = rsqrt_eps(scale(row_sum(square(x)), inv_d), eps);
  return mul_cols(scale_rows(x, inv), gain);
}

// Coordinate m of the token at position p is multiplied by exp(i p w_m);
// cos/sin are [n x d] constant tables.
template <typename T>
ComplexTensor<T> crotate(ComplexTensor<T> x, RealTensor<T> cos_t, RealTensor<T> sin_t) {
  auto re = sub(mul(x.re, cos_t), mul(x.im, sin_t));
  auto im = add(mul(x.re, sin_t), mul(x.im, cos_t));
  return {re, im};
}

template <typename T>
ComplexTensor<T> cconcat_cols(const std::vector<ComplexTensor<T>>& parts) {
  std::vector<RealTensor<T>> res, ims;
  res.reserve(parts.size());
  ims.reserve(parts.size());
  for (const auto& p : parts) {
    res.push_back(p.re);
    ims.push_back(p.im);
  }
  return {concat_cols(res), concat_cols(ims)};
}

template <typename T>
ComplexTensor<T> cselect_rows(ComplexTensor<T> x, const std::vector<int32_t>& rows) {
  return {select_rows(x.re, rows), select_rows(x.im, rows)};
}

}  // namespace pcattn
