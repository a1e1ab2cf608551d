#include "textsplat/nn/blocks.hpp"

#include <cmath>
#include <string>

namespace textsplat::nn {

using diff::Shape;
using diff::ShapeError;

template <typename T>
LayerNormParams<T> LayerNormParams<T>::create(const ParamScope<T>& scope, std::size_t width) {
  return {scope.ones("gamma", {width}), scope.zeros("beta", {width})};
}

template <typename T>
Linear<T> Linear<T>::create(const ParamScope<T>& scope, std::size_t in, std::size_t out) {
  return {scope.uniform("weight", {in, out}, in), scope.zeros("bias", {out})};
}

template <typename T>
void Linear<T>::zero() {
  for (auto& v : weight.mutable_values()) v = T(0);
  for (auto& v : bias.mutable_values()) v = T(0);
}

template <typename T>
Conv3x3<T> Conv3x3<T>::create(const ParamScope<T>& scope, std::size_t cin, std::size_t cout) {
  return {scope.uniform("weight", {cout, cin, 3, 3}, cin * 9), scope.zeros("bias", {cout})};
}

template <typename T>
void Conv3x3<T>::zero() {
  for (auto& v : weight.mutable_values()) v = T(0);
  for (auto& v : bias.mutable_values()) v = T(0);
}

template <typename T>
CrossAttentionBlock<T> CrossAttentionBlock<T>::create(const ParamScope<T>& scope, std::size_t d_model,
                                                      std::size_t context_dim, std::size_t num_heads) {
  if (num_heads == 0 || d_model % num_heads != 0) {
    throw std::invalid_argument("cross-attention: d_model " + std::to_string(d_model) +
                                " is not divisible by num_heads " + std::to_string(num_heads));
  }
  CrossAttentionBlock b;
  b.num_heads = num_heads;
  b.d_model = d_model;
  b.context_dim = context_dim;
  b.norm = LayerNormParams<T>::create(scope.child("norm"), d_model);
  b.w_q = scope.uniform("w_q", {d_model, d_model}, d_model);
  b.w_k = scope.uniform("w_k", {context_dim, d_model}, context_dim);
  b.w_v = scope.uniform("w_v", {context_dim, d_model}, context_dim);
  b.out = Linear<T>::create(scope.child("out"), d_model, d_model);
  return b;
}

namespace {

template <typename T>
void check_attention_inputs(const CrossAttentionBlock<T>& block, const Tensor<T>& queries, const Tensor<T>& context) {
  if (queries.rank() != 2 || queries.dim(1) != block.d_model) {
    throw ShapeError("cross_attention: queries " + diff::shape_str(queries.shape()) + " do not match d_model " +
                     std::to_string(block.d_model));
  }
  if (context.rank() != 2 || context.dim(0) == 0 || context.dim(1) != block.context_dim) {
    throw ShapeError("cross_attention: context " + diff::shape_str(context.shape()) + " does not match width " +
                     std::to_string(block.context_dim));
  }
}

template <typename T>
std::vector<Tensor<T>> head_scores(const CrossAttentionBlock<T>& block, const Tensor<T>& q, const Tensor<T>& k) {
  const std::size_t dh = block.d_model / block.num_heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Tensor<T>> scores;
  for (std::size_t h = 0; h < block.num_heads; ++h) {
    auto qh = diff::slice_cols(q, h * dh, dh);
    auto kh = diff::slice_cols(k, h * dh, dh);
    scores.push_back(diff::softmax_lastdim(diff::scale(diff::matmul(qh, diff::transpose(kh)), inv_sqrt)));
  }
  return scores;
}

}  // namespace

template <typename T>
std::vector<Tensor<T>> attention_scores(const CrossAttentionBlock<T>& block, const Tensor<T>& queries,
                                        const Tensor<T>& context) {
  check_attention_inputs(block, queries, context);
  auto q = diff::matmul(block.norm(queries), block.w_q);
  auto k = diff::matmul(context, block.w_k);
  return head_scores(block, q, k);
}

template <typename T>
Tensor<T> cross_attention(const CrossAttentionBlock<T>& block, const Tensor<T>& queries, const Tensor<T>& context) {
  check_attention_inputs(block, queries, context);
  const std::size_t dh = block.d_model / block.num_heads;
  auto q = diff::matmul(block.norm(queries), block.w_q);
  auto k = diff::matmul(context, block.w_k);
  auto v = diff::matmul(context, block.w_v);
  auto scores = head_scores(block, q, k);
  std::vector<Tensor<T>> heads;
  heads.reserve(block.num_heads);
  for (std::size_t h = 0; h < block.num_heads; ++h) {
    heads.push_back(diff::matmul(scores[h], diff::slice_cols(v, h * dh, dh)));
  }
  auto attended = block.num_heads == 1 ? heads[0] : diff::concat_cols(heads);
  return diff::add(queries, block.out(attended));
}

template <typename T>
FeedForward<T> FeedForward<T>::create(const ParamScope<T>& scope, std::size_t width, std::size_t hidden,
                                      Activation act) {
  return {LayerNormParams<T>::create(scope.child("norm"), width), Linear<T>::create(scope.child("fc1"), width, hidden),
          Linear<T>::create(scope.child("fc2"), hidden, width), act};
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x) const {
  return diff::add(x, fc2(diff::activation(fc1(norm(x)), act)));
}

template <typename T>
SpatialTransformerBlock<T> SpatialTransformerBlock<T>::create(const ParamScope<T>& scope, std::size_t channels,
                                                              std::size_t context_dim, std::size_t num_heads,
                                                              std::size_t ffn_hidden) {
  return {CrossAttentionBlock<T>::create(scope.child("attn1"), channels, context_dim, num_heads),
          CrossAttentionBlock<T>::create(scope.child("attn2"), channels, context_dim, num_heads),
          FeedForward<T>::create(scope.child("ffn"), channels, ffn_hidden)};
}

template <typename T>
void SpatialTransformerBlock<T>::zero_output_layers() {
  attn1.out.zero();
  attn2.out.zero();
  ffn.fc2.zero();
}

template <typename T>
Tensor<T> spatial_transformer(const SpatialTransformerBlock<T>& block, const Tensor<T>& fmap,
                              const Tensor<T>& context) {
  if (fmap.rank() != 3 || fmap.dim(0) != block.attn1.d_model) {
    throw ShapeError("spatial_transformer: feature map " + diff::shape_str(fmap.shape()) +
                     " does not have " + std::to_string(block.attn1.d_model) + " channels");
  }
  auto rows = diff::chw_to_rows(fmap);
  rows = cross_attention(block.attn1, rows, context);
  rows = cross_attention(block.attn2, rows, context);
  rows = block.ffn(rows);
  return diff::rows_to_chw(rows, fmap.dim(1), fmap.dim(2));
}

template <typename T>
ResConvBlock<T> ResConvBlock<T>::create(const ParamScope<T>& scope, std::size_t channels) {
  return {LayerNormParams<T>::create(scope.child("norm1"), channels),
          LayerNormParams<T>::create(scope.child("norm2"), channels),
          Conv3x3<T>::create(scope.child("conv1"), channels, channels),
          Conv3x3<T>::create(scope.child("conv2"), channels, channels)};
}

namespace {

template <typename T>
Tensor<T> norm_silu(const LayerNormParams<T>& norm, const Tensor<T>& fmap) {
  auto rows = diff::silu(norm(diff::chw_to_rows(fmap)));
  return diff::rows_to_chw(rows, fmap.dim(1), fmap.dim(2));
}

}  // namespace

template <typename T>
Tensor<T> res_conv(const ResConvBlock<T>& block, const Tensor<T>& fmap) {
  if (fmap.rank() != 3) throw ShapeError("res_conv: expected [C,H,W], got " + diff::shape_str(fmap.shape()));
  auto h = block.conv1(norm_silu(block.norm1, fmap));
  h = block.conv2(norm_silu(block.norm2, h));
  return diff::add(fmap, h);
}

template <typename T>
UpsampleBlock<T> UpsampleBlock<T>::create(const ParamScope<T>& scope, std::size_t channels) {
  return {Conv3x3<T>::create(scope.child("conv"), channels, channels)};
}

template <typename T>
Tensor<T> upsample_block(const UpsampleBlock<T>& block, const Tensor<T>& fmap) {
  return block.conv(diff::upsample2x_bilinear(fmap));
}

template <typename T>
Tensor<T> posenc_2d(std::size_t h, std::size_t w, std::size_t channels) {
  if (channels == 0 || channels % 4 != 0) {
    throw std::invalid_argument("posenc_2d: channel count " + std::to_string(channels) + " is not divisible by 4");
  }
  const std::size_t bands = channels / 4;
  std::vector<T> out(channels * h * w);
  for (std::size_t k = 0; k < bands; ++k) {
    const double freq = std::pow(1e4, -static_cast<double>(k) / static_cast<double>(bands));
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double ay = static_cast<double>(y) * freq, ax = static_cast<double>(x) * freq;
        const std::size_t p = y * w + x;
        out[(0 * bands + k) * h * w + p] = static_cast<T>(std::sin(ay));
        out[(1 * bands + k) * h * w + p] = static_cast<T>(std::cos(ay));
        out[(2 * bands + k) * h * w + p] = static_cast<T>(std::sin(ax));
        out[(3 * bands + k) * h * w + p] = static_cast<T>(std::cos(ax));
      }
    }
  }
  return Tensor<T>::from({channels, h, w}, std::move(out));
}

#define TEXTSPLAT_INSTANTIATE_NN(T)                                                                        \
  template struct LayerNormParams<T>;                                                                      \
  template struct Linear<T>;                                                                               \
  template struct Conv3x3<T>;                                                                              \
  template struct CrossAttentionBlock<T>;                                                                  \
  template struct FeedForward<T>;                                                                          \
  template struct SpatialTransformerBlock<T>;                                                              \
  template struct ResConvBlock<T>;                                                                         \
  template struct UpsampleBlock<T>;                                                                        \
  template Tensor<T> cross_attention(const CrossAttentionBlock<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template std::vector<Tensor<T>> attention_scores(const CrossAttentionBlock<T>&, const Tensor<T>&,        \
                                                   const Tensor<T>&);                                      \
  template Tensor<T> spatial_transformer(const SpatialTransformerBlock<T>&, const Tensor<T>&,              \
                                         const Tensor<T>&);                                                \
  template Tensor<T> res_conv(const ResConvBlock<T>&, const Tensor<T>&);                                   \
  template Tensor<T> upsample_block(const UpsampleBlock<T>&, const Tensor<T>&);                            \
  template Tensor<T> posenc_2d(std::size_t, std::size_t, std::size_t);

TEXTSPLAT_INSTANTIATE_NN(float)
TEXTSPLAT_INSTANTIATE_NN(double)

}  // namespace textsplat::nn
