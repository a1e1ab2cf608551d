#pragma once

#include <vector>

#include "textsplat/nn/blocks.hpp"

namespace textsplat::tsd {

using diff::Tensor;

// Fixed N^3 lattice spanning [-extent, extent]^3, x fastest, then y, then z.
struct AnchorGrid {
  std::size_t n_side = 0;
  double extent = 0.0;
  std::vector<double> points;  // n_side^3 x 3

  std::size_t count() const { return points.size() / 3; }
  double spacing() const { return 2.0 * extent / static_cast<double>(n_side - 1); }

  template <typename T>
  Tensor<T> to_tensor() const {
    return Tensor<T>::from({count(), 3}, std::vector<T>(points.begin(), points.end()));
  }
};

AnchorGrid make_anchor_grid(std::size_t n_side, double extent);

struct TsdConfig {
  std::size_t d_model = 32;
  std::size_t context_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t num_blocks = 2;
  std::size_t num_freqs = 4;  // sinusoidal bands per axis
  double max_offset = 0.2;    // offsets stay inside (-max_offset, max_offset)
};

template <typename T>
struct TsdUnit {
  nn::CrossAttentionBlock<T> attn;
  nn::FeedForward<T> ffn;
};

template <typename T>
struct TsdNetwork {
  TsdConfig cfg;
  nn::Linear<T> point_embed;
  std::vector<TsdUnit<T>> blocks;
  nn::LayerNormParams<T> final_norm;
  nn::Linear<T> head;  // d_model -> 3

  static TsdNetwork create(const diff::ParamScope<T>& scope, const TsdConfig& cfg);
};

// [p/extent, sin(2^k pi p/extent), cos(2^k pi p/extent)] per anchor.
template <typename T>
Tensor<T> encode_anchors(const AnchorGrid& grid, std::size_t num_freqs);

// Bounded offsets 2*m*sigmoid(head(...)) - m with m = max_offset, shape [N^3, 3].
template <typename T>
Tensor<T> deform_offsets(const TsdNetwork<T>& net, const AnchorGrid& grid, const Tensor<T>& context);

// Gaussian centers p + offset.
template <typename T>
Tensor<T> deform(const TsdNetwork<T>& net, const AnchorGrid& grid, const Tensor<T>& context);

}  // namespace textsplat::tsd
