#include "textsplat/ttg/ttg.hpp"

#include <stdexcept>
#include <string>

#include "textsplat/diff/rng.hpp"

namespace textsplat::ttg {

template <typename T>
PlaneGenerator<T> PlaneGenerator<T>::create(const diff::ParamScope<T>& scope, const TtgConfig& cfg,
                                            std::size_t out_channels) {
  if (cfg.width % 4 != 0) throw std::invalid_argument("ttg: width must be a multiple of 4");
  if (cfg.base_res < 1 || out_channels == 0) throw std::invalid_argument("ttg: empty plane configuration");
  PlaneGenerator g;
  g.cfg = cfg;
  g.out_channels = out_channels;
  g.base_query = nn::posenc_2d<T>(cfg.base_res, cfg.base_res, cfg.width);
  const std::size_t hidden = cfg.ffn_mult * cfg.width;
  for (std::size_t i = 0; i < cfg.low_blocks; ++i) {
    auto s = scope.child("low" + std::to_string(i));
    g.low.push_back({nn::ResConvBlock<T>::create(s.child("res"), cfg.width),
                     nn::SpatialTransformerBlock<T>::create(s.child("st"), cfg.width, cfg.context_dim, cfg.num_heads,
                                                            hidden)});
  }
  for (std::size_t i = 0; i < cfg.upsamples; ++i) {
    auto s = scope.child("up" + std::to_string(i));
    g.up.push_back({nn::ResConvBlock<T>::create(s.child("res"), cfg.width),
                    nn::SpatialTransformerBlock<T>::create(s.child("st"), cfg.width, cfg.context_dim, cfg.num_heads,
                                                           hidden),
                    nn::UpsampleBlock<T>::create(s.child("upsample"), cfg.width)});
  }
  g.out_conv = nn::Conv3x3<T>::create(scope.child("out_conv"), cfg.width, out_channels);
  return g;
}

template <typename T>
void PlaneGenerator<T>::zero_residual_branches() {
  for (auto& s : low) {
    s.res.zero_output_layers();
    s.st.zero_output_layers();
  }
  for (auto& s : up) {
    s.res.zero_output_layers();
    s.st.zero_output_layers();
  }
}

template <typename T>
Tensor<T> generate_plane(const PlaneGenerator<T>& gen, const Tensor<T>& context) {
  Tensor<T> h = gen.base_query;
  for (const auto& s : gen.low) h = nn::spatial_transformer(s.st, nn::res_conv(s.res, h), context);
  for (const auto& s : gen.up) h = nn::upsample_block(s.up, nn::spatial_transformer(s.st, nn::res_conv(s.res, h), context));
  return gen.out_conv(h);
}

template <typename T>
Triplane<T> generate_triplane(const PlaneGenerator<T>& gxy, const PlaneGenerator<T>& gxz,
                              const PlaneGenerator<T>& gyz, const Tensor<T>& context, double extent) {
  if (!(gxy.cfg == gxz.cfg) || !(gxy.cfg == gyz.cfg) || gxy.out_channels != gxz.out_channels ||
      gxy.out_channels != gyz.out_channels) {
    throw std::invalid_argument("generate_triplane: the three generators must share one configuration");
  }
  return {generate_plane(gxy, context), generate_plane(gxz, context), generate_plane(gyz, context), extent};
}

template <typename T>
Triplane<T> single_generator_mode(const PlaneGenerator<T>& gen, const Tensor<T>& context, double extent) {
  if (gen.out_channels % 3 != 0) {
    throw std::invalid_argument("single_generator_mode: output channels " + std::to_string(gen.out_channels) +
                                " not divisible by 3");
  }
  const std::size_t c = gen.out_channels / 3;
  auto all = generate_plane(gen, context);
  return {diff::slice_channels(all, 0, c), diff::slice_channels(all, c, c), diff::slice_channels(all, 2 * c, c),
          extent};
}

template <typename T>
TriplaneGenerator<T> TriplaneGenerator<T>::create(diff::ParameterStore<T>& store, const std::string& prefix,
                                                  std::uint64_t seed, const TtgConfig& cfg, TtgMode mode,
                                                  double extent) {
  TriplaneGenerator tg;
  tg.mode = mode;
  tg.extent = extent;
  if (mode == TtgMode::single) {
    diff::ParamScope<T> scope(store, prefix + ".shared", diff::mix_seed(seed, "shared"));
    tg.generators.push_back(PlaneGenerator<T>::create(scope, cfg, 3 * cfg.channels));
  } else {
    const char* names[] = {"xy", "xz", "yz"};
    for (const char* name : names) {
      diff::ParamScope<T> scope(store, prefix + "." + name, diff::mix_seed(seed, name));
      tg.generators.push_back(PlaneGenerator<T>::create(scope, cfg, cfg.channels));
    }
  }
  return tg;
}

template <typename T>
Triplane<T> TriplaneGenerator<T>::operator()(const Tensor<T>& context) const {
  if (mode == TtgMode::single) return single_generator_mode(generators[0], context, extent);
  return generate_triplane(generators[0], generators[1], generators[2], context, extent);
}

template struct PlaneGenerator<float>;
template struct PlaneGenerator<double>;
template struct TriplaneGenerator<float>;
template struct TriplaneGenerator<double>;
template Tensor<float> generate_plane(const PlaneGenerator<float>&, const Tensor<float>&);
template Tensor<double> generate_plane(const PlaneGenerator<double>&, const Tensor<double>&);
template Triplane<float> generate_triplane(const PlaneGenerator<float>&, const PlaneGenerator<float>&,
                                           const PlaneGenerator<float>&, const Tensor<float>&, double);
template Triplane<double> generate_triplane(const PlaneGenerator<double>&, const PlaneGenerator<double>&,
                                            const PlaneGenerator<double>&, const Tensor<double>&, double);
template Triplane<float> single_generator_mode(const PlaneGenerator<float>&, const Tensor<float>&, double);
template Triplane<double> single_generator_mode(const PlaneGenerator<double>&, const Tensor<double>&, double);

}  // namespace textsplat::ttg
