#include "textsplat/model/model.hpp"

#include "textsplat/diff/rng.hpp"

namespace textsplat::model {

tsd::TsdConfig ModelConfig::tsd_config() const {
  tsd::TsdConfig c;
  c.d_model = model_dim;
  c.context_dim = embed_dim;
  c.num_heads = attn_heads;
  c.ffn_hidden = ffn_mult * model_dim;
  c.num_blocks = tsd_blocks;
  c.num_freqs = tsd_freqs;
  c.max_offset = max_offset;
  return c;
}

ttg::TtgConfig ModelConfig::ttg_config() const {
  ttg::TtgConfig c;
  c.channels = triplane_channels;
  c.base_res = triplane_base_res;
  c.upsamples = triplane_upsamples;
  c.width = ttg_width;
  c.context_dim = embed_dim;
  c.num_heads = attn_heads;
  c.ffn_mult = ffn_mult;
  return c;
}

decoder::DecoderConfig ModelConfig::decoder_config() const {
  decoder::DecoderConfig c;
  c.feature_channels = triplane_channels;
  c.hidden = decoder_hidden;
  c.scale_min = scale_min;
  c.scale_max = scale_max;
  c.use_coords = decoder_coords;
  return c;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg), grid_(tsd::make_anchor_grid(cfg.grid_n, cfg.grid_extent)) {
  tsd_ = tsd::TsdNetwork<T>::create(diff::ParamScope<T>(store_, "tsd", diff::mix_seed(cfg.seed, "tsd")),
                                    cfg.tsd_config());
  ttg_ = ttg::TriplaneGenerator<T>::create(store_, "ttg", diff::mix_seed(cfg.seed, "ttg"), cfg.ttg_config(),
                                           cfg.ttg_mode, cfg.plane_extent());
  decoder_ = decoder::GaussianDecoder<T>::create(
      diff::ParamScope<T>(store_, "decoder", diff::mix_seed(cfg.seed, "decoder")), cfg.decoder_config());
}

template <typename T>
text::TextEmbedding Model<T>::embed(const std::string& prompt) const {
  return text::embed(prompt, cfg_.embed_len, cfg_.embed_dim, cfg_.embed_seed);
}

template <typename T>
Intermediates<T> Model<T>::forward(const Tensor<T>& context) const {
  Intermediates<T> out;
  out.centers = tsd::deform(tsd_, grid_, context);
  out.triplane = ttg_(context);
  out.features = decoder::sample_triplane(out.triplane, out.centers);
  out.gaussians = decoder::decode(decoder_, out.features, out.centers);
  return out;
}

template <typename T>
Intermediates<T> Model<T>::forward(const std::string& prompt) const {
  return forward(embed(prompt).template to_tensor<T>());
}

template class Model<float>;
template class Model<double>;

}  // namespace textsplat::model
