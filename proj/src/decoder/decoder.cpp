#include "textsplat/decoder/decoder.hpp"

#include <stdexcept>

namespace textsplat::decoder {

template <typename T>
GaussianSet<T> GaussianSet<T>::detached() const {
  return {centers.detach(), scaling_raw.detach(), rotation.detach(),
          opacity.detach(), opacity_raw.detach(), sh_dc.detach()};
}

template <typename T>
GaussianDecoder<T> GaussianDecoder<T>::create(const diff::ParamScope<T>& scope, const DecoderConfig& cfg) {
  if (!(cfg.scale_min < cfg.scale_max)) throw std::invalid_argument("decoder: scale_min must be below scale_max");
  GaussianDecoder d;
  d.cfg = cfg;
  const std::size_t in = cfg.feature_channels + (cfg.use_coords ? 3 : 0);
  d.shape_fc1 = nn::Linear<T>::create(scope.child("shape.fc1"), in, cfg.hidden);
  d.shape_fc2 = nn::Linear<T>::create(scope.child("shape.fc2"), cfg.hidden, 8);
  d.color_fc1 = nn::Linear<T>::create(scope.child("color.fc1"), in, cfg.hidden);
  d.color_fc2 = nn::Linear<T>::create(scope.child("color.fc2"), cfg.hidden, 3);
  return d;
}

template <typename T>
void GaussianDecoder<T>::zero() {
  shape_fc1.zero();
  shape_fc2.zero();
  color_fc1.zero();
  color_fc2.zero();
}

template <typename T>
Tensor<T> sample_triplane(const ttg::Triplane<T>& tri, const Tensor<T>& centers) {
  if (centers.rank() != 2 || centers.dim(1) != 3) {
    throw diff::ShapeError("sample_triplane: centers must be [M,3], got " + diff::shape_str(centers.shape()));
  }
  const auto uvw = diff::scale(centers, static_cast<T>(1.0 / tri.extent));
  auto f = diff::grid_sample_bilinear(tri.xy, diff::select_cols(uvw, {0, 1}));
  f = diff::add(f, diff::grid_sample_bilinear(tri.xz, diff::select_cols(uvw, {0, 2})));
  f = diff::add(f, diff::grid_sample_bilinear(tri.yz, diff::select_cols(uvw, {1, 2})));
  return diff::scale(f, static_cast<T>(1.0 / 3.0));
}

template <typename T>
GaussianSet<T> decode(const GaussianDecoder<T>& dec, const Tensor<T>& features, const Tensor<T>& centers) {
  const auto in = dec.cfg.use_coords ? diff::concat_cols<T>({features, centers}) : features;
  const auto shape = dec.shape_fc2(diff::silu(dec.shape_fc1(in)));
  const auto color = dec.color_fc2(diff::silu(dec.color_fc1(in)));

  GaussianSet<T> g;
  g.centers = centers;
  g.opacity_raw = diff::slice_cols(shape, 0, 1);
  g.opacity = diff::range_sigmoid(g.opacity_raw, T(0), T(1));
  g.scaling_raw = diff::range_sigmoid(diff::slice_cols(shape, 1, 3), static_cast<T>(dec.cfg.scale_min),
                                      static_cast<T>(dec.cfg.scale_max));
  g.rotation = diff::normalize_rows_or_identity(diff::slice_cols(shape, 4, 4), T(1e-8));
  g.sh_dc = color;
  return g;
}

template struct GaussianSet<float>;
template struct GaussianSet<double>;
template struct GaussianDecoder<float>;
template struct GaussianDecoder<double>;
template Tensor<float> sample_triplane(const ttg::Triplane<float>&, const Tensor<float>&);
template Tensor<double> sample_triplane(const ttg::Triplane<double>&, const Tensor<double>&);
template GaussianSet<float> decode(const GaussianDecoder<float>&, const Tensor<float>&, const Tensor<float>&);
template GaussianSet<double> decode(const GaussianDecoder<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace textsplat::decoder
