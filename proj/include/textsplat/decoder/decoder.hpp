#pragma once

#include "textsplat/nn/blocks.hpp"
#include "textsplat/ttg/ttg.hpp"

namespace textsplat::decoder {

using diff::Tensor;

// Per-Gaussian attributes. scaling_raw holds log extents; opacity_raw keeps
// the logit the opacity was produced from.
template <typename T>
struct GaussianSet {
  Tensor<T> centers;      // [M,3]
  Tensor<T> scaling_raw;  // [M,3]
  Tensor<T> rotation;     // [M,4] unit quaternion (w,x,y,z)
  Tensor<T> opacity;      // [M,1]
  Tensor<T> opacity_raw;  // [M,1]
  Tensor<T> sh_dc;        // [M,3]

  std::size_t count() const { return centers.dim(0); }
  // Copy with every attribute cut from the graph.
  GaussianSet detached() const;
};

struct DecoderConfig {
  std::size_t feature_channels = 16;  // C
  std::size_t hidden = 32;
  double scale_min = -9.0;
  double scale_max = -3.0;
  bool use_coords = true;
};

template <typename T>
struct GaussianDecoder {
  DecoderConfig cfg;
  nn::Linear<T> shape_fc1, shape_fc2;  // -> opacity(1), scaling(3), rotation(4)
  nn::Linear<T> color_fc1, color_fc2;  // -> sh_dc(3)

  static GaussianDecoder create(const diff::ParamScope<T>& scope, const DecoderConfig& cfg);
  void zero();
};

// Mean of the bilinear samples of the xy, xz and yz planes at each center,
// with centers mapped by 1/extent into plane coordinates. [M,C]
template <typename T>
Tensor<T> sample_triplane(const ttg::Triplane<T>& tri, const Tensor<T>& centers);

template <typename T>
GaussianSet<T> decode(const GaussianDecoder<T>& dec, const Tensor<T>& features, const Tensor<T>& centers);

}  // namespace textsplat::decoder
