#pragma once

#include <span>
#include <vector>

#include "textsplat/diff/tensor.hpp"

// Differentiable tensor operations. All reductions run in a fixed sequential
// order, so results are bit-identical across runs.
namespace textsplat::diff {

enum class Activation { silu, sigmoid };

// Elementwise arithmetic; operands must have identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

// x[..,D] (+|*) v[D], broadcasting v over every row.
template <typename T> Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v);
template <typename T> Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
// sum(a * c) with c treated as a constant (no gradient flows into c).
template <typename T> Tensor<T> dot_const(const Tensor<T>& a, std::span<const T> c);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);  // [m,n] -> [n,m]
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);  // along last axis, rank 2
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <typename T> Tensor<T> select_cols(const Tensor<T>& a, const std::vector<std::size_t>& cols);
// x[C,H,W] -> channels [begin, begin+count)
template <typename T> Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

// a[..,m,k] @ b[..,k,n]. b may be rank 2 (shared across a's batch) or carry
// the same batch extents as a.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x[N,in] @ w[in,out] + bias[out]
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);
// lo + (hi - lo) * sigmoid(x), kept strictly inside (lo, hi) even where the
// sigmoid saturates in floating point.
template <typename T> Tensor<T> range_sigmoid(const Tensor<T>& x, T lo, T hi);
template <typename T> Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

// 3x3 cross-correlation with zero padding 1: x[Cin,H,W], w[Cout,Cin,3,3], b[Cout].
template <typename T> Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Bilinear lookup with align-corners semantics: coords[M,2] = (u along W,
// v along H) in [-1,1]; values outside are clamped. Returns [M,C].
template <typename T> Tensor<T> grid_sample_bilinear(const Tensor<T>& plane, const Tensor<T>& coords);

// [C,H,W] -> [C,2H,2W], bilinear with half-pixel (align-corners=false) centers.
template <typename T> Tensor<T> upsample2x_bilinear(const Tensor<T>& x);

// Layout changes between feature maps and token rows.
template <typename T> Tensor<T> chw_to_rows(const Tensor<T>& x);  // [C,H,W] -> [H*W,C]
template <typename T> Tensor<T> rows_to_chw(const Tensor<T>& x, std::size_t h, std::size_t w);

// Row-wise L2 normalization of q[M,K]. Rows with norm below min_norm are
// replaced by (1,0,...,0) and pass no gradient.
template <typename T> Tensor<T> normalize_rows_or_identity(const Tensor<T>& q, T min_norm);

}  // namespace textsplat::diff
