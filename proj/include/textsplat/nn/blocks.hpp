#pragma once

#include <vector>

#include "textsplat/diff/ops.hpp"
#include "textsplat/diff/params.hpp"

namespace textsplat::nn {

using diff::Activation;
using diff::ParamScope;
using diff::Tensor;

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma, beta;

  static LayerNormParams create(const ParamScope<T>& scope, std::size_t width);
  Tensor<T> operator()(const Tensor<T>& x) const { return diff::layer_norm(x, gamma, beta); }
};

// y = x W + b with W stored [in, out].
template <typename T>
struct Linear {
  Tensor<T> weight, bias;

  static Linear create(const ParamScope<T>& scope, std::size_t in, std::size_t out);
  Tensor<T> operator()(const Tensor<T>& x) const { return diff::linear(x, weight, bias); }
  void zero();
};

template <typename T>
struct Conv3x3 {
  Tensor<T> weight, bias;  // [Cout,Cin,3,3], [Cout]

  static Conv3x3 create(const ParamScope<T>& scope, std::size_t cin, std::size_t cout);
  Tensor<T> operator()(const Tensor<T>& x) const { return diff::conv2d_3x3(x, weight, bias); }
  void zero();
};

// Pre-norm multi-head attention from query rows to text tokens, with a
// residual around the output projection.
template <typename T>
struct CrossAttentionBlock {
  std::size_t num_heads = 1;
  std::size_t d_model = 0;
  std::size_t context_dim = 0;
  LayerNormParams<T> norm;
  Tensor<T> w_q;  // [d_model, d_model]
  Tensor<T> w_k;  // [context_dim, d_model]
  Tensor<T> w_v;  // [context_dim, d_model]
  Linear<T> out;  // W_O

  static CrossAttentionBlock create(const ParamScope<T>& scope, std::size_t d_model, std::size_t context_dim,
                                    std::size_t num_heads);
};

// queries[N,d_model], context[L,context_dim] -> [N,d_model]
template <typename T>
Tensor<T> cross_attention(const CrossAttentionBlock<T>& block, const Tensor<T>& queries, const Tensor<T>& context);

// Per-head softmax score matrices [N,L], for inspection.
template <typename T>
std::vector<Tensor<T>> attention_scores(const CrossAttentionBlock<T>& block, const Tensor<T>& queries,
                                        const Tensor<T>& context);

template <typename T>
struct FeedForward {
  LayerNormParams<T> norm;
  Linear<T> fc1, fc2;
  Activation act = Activation::silu;

  static FeedForward create(const ParamScope<T>& scope, std::size_t width, std::size_t hidden,
                            Activation act = Activation::silu);
  Tensor<T> operator()(const Tensor<T>& x) const;  // x + fc2(act(fc1(norm(x))))
};

// Two text cross-attentions and a feed-forward stage over flattened pixels.
// There is no pixel self-attention.
template <typename T>
struct SpatialTransformerBlock {
  CrossAttentionBlock<T> attn1, attn2;
  FeedForward<T> ffn;

  static SpatialTransformerBlock create(const ParamScope<T>& scope, std::size_t channels, std::size_t context_dim,
                                        std::size_t num_heads, std::size_t ffn_hidden);
  void zero_output_layers();
};

template <typename T>
Tensor<T> spatial_transformer(const SpatialTransformerBlock<T>& block, const Tensor<T>& fmap,
                              const Tensor<T>& context);

// norm -> silu -> conv -> norm -> silu -> conv, plus the input skip. Norms act
// on the channel vector of each pixel.
template <typename T>
struct ResConvBlock {
  LayerNormParams<T> norm1, norm2;
  Conv3x3<T> conv1, conv2;

  static ResConvBlock create(const ParamScope<T>& scope, std::size_t channels);
  void zero_output_layers() { conv2.zero(); }
};

template <typename T>
Tensor<T> res_conv(const ResConvBlock<T>& block, const Tensor<T>& fmap);

template <typename T>
struct UpsampleBlock {
  Conv3x3<T> conv;

  static UpsampleBlock create(const ParamScope<T>& scope, std::size_t channels);
};

template <typename T>
Tensor<T> upsample_block(const UpsampleBlock<T>& block, const Tensor<T>& fmap);

// Sinusoidal 2D encoding [C,H,W] with C/4 geometric frequency bands from 1 down
// to 1e-4 rad/pixel. Channel groups: sin(row), cos(row), sin(col), cos(col).
template <typename T>
Tensor<T> posenc_2d(std::size_t h, std::size_t w, std::size_t channels);

}  // namespace textsplat::nn
