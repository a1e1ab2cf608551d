#pragma once

#include <array>
#include <vector>

#include "textsplat/nn/blocks.hpp"

namespace textsplat::ttg {

using diff::Tensor;

struct TtgConfig {
  std::size_t channels = 16;   // C, channels of each output plane
  std::size_t base_res = 8;    // R0
  std::size_t upsamples = 2;   // U, R = R0 * 2^U
  std::size_t width = 16;      // internal feature width, multiple of 4
  std::size_t context_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ffn_mult = 2;
  std::size_t low_blocks = 3;

  std::size_t resolution() const { return base_res << upsamples; }
  bool operator==(const TtgConfig&) const = default;
};

template <typename T>
struct Triplane {
  Tensor<T> xy, xz, yz;  // each [C, R, R]
  double extent = 1.2;   // planes cover [-extent, extent]^2

  std::size_t channels() const { return xy.dim(0); }
  std::size_t resolution() const { return xy.dim(1); }
  std::array<Tensor<T>, 3> planes() const { return {xy, xz, yz}; }
};

template <typename T>
struct LowStage {
  nn::ResConvBlock<T> res;
  nn::SpatialTransformerBlock<T> st;
};

template <typename T>
struct UpStage {
  nn::ResConvBlock<T> res;
  nn::SpatialTransformerBlock<T> st;
  nn::UpsampleBlock<T> up;
};

template <typename T>
struct PlaneGenerator {
  TtgConfig cfg;
  std::size_t out_channels = 0;
  Tensor<T> base_query;  // fixed positional encoding [width, R0, R0]
  std::vector<LowStage<T>> low;
  std::vector<UpStage<T>> up;
  nn::Conv3x3<T> out_conv;

  static PlaneGenerator create(const diff::ParamScope<T>& scope, const TtgConfig& cfg, std::size_t out_channels);
  // Zeroes the last layer of every residual branch so each stage passes its
  // input through unchanged.
  void zero_residual_branches();
};

// [out_channels, R, R]
template <typename T>
Tensor<T> generate_plane(const PlaneGenerator<T>& gen, const Tensor<T>& context);

// Three generators with identical hyperparameters and separate weights.
template <typename T>
Triplane<T> generate_triplane(const PlaneGenerator<T>& gxy, const PlaneGenerator<T>& gxz,
                              const PlaneGenerator<T>& gyz, const Tensor<T>& context, double extent = 1.2);

// One generator with 3C output channels, split in order xy, xz, yz.
template <typename T>
Triplane<T> single_generator_mode(const PlaneGenerator<T>& gen, const Tensor<T>& context, double extent = 1.2);

enum class TtgMode { separate, single };

// Owns the generators for either mode under the prefixes "<prefix>.xy",
// "<prefix>.xz", "<prefix>.yz" or "<prefix>.shared".
template <typename T>
struct TriplaneGenerator {
  TtgMode mode = TtgMode::separate;
  double extent = 1.2;
  std::vector<PlaneGenerator<T>> generators;

  static TriplaneGenerator create(diff::ParameterStore<T>& store, const std::string& prefix, std::uint64_t seed,
                                  const TtgConfig& cfg, TtgMode mode, double extent);
  Triplane<T> operator()(const Tensor<T>& context) const;
};

}  // namespace textsplat::ttg
