#pragma once

// Independent scalar references shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "textsplat/nn/blocks.hpp"

namespace oracle {

using Td = textsplat::diff::Tensor<double>;
using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Td& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  return m;
}

inline Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Dense reference: q + concat_h(softmax(Qh Kh^T / sqrt(d_head)) Vh) Wo + bo
// with Q = LN(q) Wq, K = y Wk, V = y Wv.
inline Mat dense_attention(const textsplat::nn::CrossAttentionBlock<double>& b, const Td& queries, const Td& ctx) {
  Mat q = to_mat(queries), y = to_mat(ctx);
  const std::size_t d = b.d_model, heads = b.num_heads, dh = d / heads;
  Mat qn = q;
  for (auto& row : qn) {
    double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= d;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= d;
    for (std::size_t j = 0; j < d; ++j)
      row[j] = (row[j] - mu) / std::sqrt(var + 1e-5) * b.norm.gamma[j] + b.norm.beta[j];
  }
  Mat Q = mm(qn, to_mat(b.w_q)), K = mm(y, to_mat(b.w_k)), V = mm(y, to_mat(b.w_v));
  Mat mixed(Q.size(), std::vector<double>(d, 0.0));
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < Q.size(); ++i) {
      std::vector<double> s(K.size());
      double total = 0;
      for (std::size_t l = 0; l < K.size(); ++l) {
        double dot = 0;
        for (std::size_t j = hd * dh; j < (hd + 1) * dh; ++j) dot += Q[i][j] * K[l][j];
        s[l] = std::exp(dot / std::sqrt(static_cast<double>(dh)));
        total += s[l];
      }
      for (std::size_t l = 0; l < K.size(); ++l)
        for (std::size_t j = hd * dh; j < (hd + 1) * dh; ++j) mixed[i][j] += s[l] / total * V[l][j];
    }
  }
  Mat h = mm(mixed, to_mat(b.out.weight));
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) h[i][j] += b.out.bias[j] + q[i][j];
  return h;
}

// Scalar bilinear lookup on plane[C,H,W], align-corners, clamped.
inline double bilinear(const Td& plane, std::size_t ch, double u, double v) {
  const std::size_t h = plane.dim(1), w = plane.dim(2);
  const double x = (std::clamp(u, -1.0, 1.0) + 1) * 0.5 * (w - 1);
  const double y = (std::clamp(v, -1.0, 1.0) + 1) * 0.5 * (h - 1);
  const auto x0 = static_cast<std::size_t>(std::min(std::floor(x), double(w - 2)));
  const auto y0 = static_cast<std::size_t>(std::min(std::floor(y), double(h - 2)));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](std::size_t yy, std::size_t xx) { return plane[(ch * h + yy) * w + xx]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

}  // namespace oracle
