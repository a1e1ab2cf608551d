#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "textsplat/decoder/decoder.hpp"
#include "textsplat/diff/params.hpp"
#include "textsplat/text/embedding.hpp"
#include "textsplat/tsd/tsd.hpp"
#include "textsplat/ttg/ttg.hpp"

namespace textsplat::model {

using diff::Tensor;

struct ModelConfig {
  std::uint64_t seed = 0;
  std::uint64_t embed_seed = 0;
  std::size_t grid_n = 8;
  double grid_extent = 1.0;
  std::size_t embed_len = 16;  // L
  std::size_t embed_dim = 32;  // D
  std::size_t model_dim = 32;
  std::size_t attn_heads = 4;
  std::size_t ffn_mult = 2;
  std::size_t tsd_blocks = 2;
  std::size_t tsd_freqs = 4;
  double max_offset = 0.2;
  std::size_t triplane_channels = 16;
  std::size_t triplane_base_res = 8;
  std::size_t triplane_upsamples = 2;
  std::size_t ttg_width = 16;
  ttg::TtgMode ttg_mode = ttg::TtgMode::separate;
  std::size_t decoder_hidden = 32;
  bool decoder_coords = true;
  double scale_min = -9.0;
  double scale_max = -3.0;

  tsd::TsdConfig tsd_config() const;
  ttg::TtgConfig ttg_config() const;
  decoder::DecoderConfig decoder_config() const;
  double plane_extent() const { return grid_extent + max_offset; }
};

template <typename T>
struct Intermediates {
  Tensor<T> centers;          // [M,3]
  ttg::Triplane<T> triplane;
  Tensor<T> features;         // [M,C]
  decoder::GaussianSet<T> gaussians;
};

// Full generator: anchor deformation, triplane generation and decoding, with
// all parameters in one store under "tsd.", "ttg." and "decoder.".
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  diff::ParameterStore<T>& store() { return store_; }
  const diff::ParameterStore<T>& store() const { return store_; }
  const tsd::AnchorGrid& grid() const { return grid_; }
  const tsd::TsdNetwork<T>& tsd() const { return tsd_; }
  tsd::TsdNetwork<T>& tsd() { return tsd_; }
  const ttg::TriplaneGenerator<T>& ttg() const { return ttg_; }
  ttg::TriplaneGenerator<T>& ttg() { return ttg_; }
  const decoder::GaussianDecoder<T>& decoder() const { return decoder_; }
  decoder::GaussianDecoder<T>& decoder() { return decoder_; }

  text::TextEmbedding embed(const std::string& prompt) const;
  Intermediates<T> forward(const Tensor<T>& context) const;
  Intermediates<T> forward(const std::string& prompt) const;

 private:
  ModelConfig cfg_;
  diff::ParameterStore<T> store_;
  tsd::AnchorGrid grid_;
  tsd::TsdNetwork<T> tsd_;
  ttg::TriplaneGenerator<T> ttg_;
  decoder::GaussianDecoder<T> decoder_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace textsplat::model
