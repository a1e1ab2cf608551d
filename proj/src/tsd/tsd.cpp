#include "textsplat/tsd/tsd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace textsplat::tsd {

AnchorGrid make_anchor_grid(std::size_t n_side, double extent) {
  if (n_side < 2) throw std::invalid_argument("anchor grid: n_side must be >= 2, got " + std::to_string(n_side));
  if (!(extent > 0.0)) throw std::invalid_argument("anchor grid: extent must be positive");
  AnchorGrid g;
  g.n_side = n_side;
  g.extent = extent;
  g.points.reserve(n_side * n_side * n_side * 3);
  auto coord = [&](std::size_t i) {
    return -extent + 2.0 * extent * static_cast<double>(i) / static_cast<double>(n_side - 1);
  };
  for (std::size_t z = 0; z < n_side; ++z)
    for (std::size_t y = 0; y < n_side; ++y)
      for (std::size_t x = 0; x < n_side; ++x) {
        g.points.push_back(coord(x));
        g.points.push_back(coord(y));
        g.points.push_back(coord(z));
      }
  return g;
}

template <typename T>
TsdNetwork<T> TsdNetwork<T>::create(const diff::ParamScope<T>& scope, const TsdConfig& cfg) {
  if (!(cfg.max_offset > 0.0)) throw std::invalid_argument("tsd: max_offset must be positive");
  TsdNetwork net;
  net.cfg = cfg;
  net.point_embed = nn::Linear<T>::create(scope.child("point_embed"), 3 + 6 * cfg.num_freqs, cfg.d_model);
  for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
    auto s = scope.child("block" + std::to_string(b));
    net.blocks.push_back({nn::CrossAttentionBlock<T>::create(s.child("attn"), cfg.d_model, cfg.context_dim, cfg.num_heads),
                          nn::FeedForward<T>::create(s.child("ffn"), cfg.d_model, cfg.ffn_hidden)});
  }
  net.final_norm = nn::LayerNormParams<T>::create(scope.child("final_norm"), cfg.d_model);
  net.head = nn::Linear<T>::create(scope.child("head"), cfg.d_model, 3);
  return net;
}

template <typename T>
Tensor<T> encode_anchors(const AnchorGrid& grid, std::size_t num_freqs) {
  const std::size_t m = grid.count(), width = 3 + 6 * num_freqs;
  std::vector<T> out(m * width);
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * width;
    for (std::size_t a = 0; a < 3; ++a) {
      const double u = grid.points[i * 3 + a] / grid.extent;
      row[a] = static_cast<T>(u);
      for (std::size_t k = 0; k < num_freqs; ++k) {
        const double ang = std::ldexp(std::numbers::pi, static_cast<int>(k)) * u;
        row[3 + (k * 3 + a) * 2 + 0] = static_cast<T>(std::sin(ang));
        row[3 + (k * 3 + a) * 2 + 1] = static_cast<T>(std::cos(ang));
      }
    }
  }
  return Tensor<T>::from({m, width}, std::move(out));
}

template <typename T>
Tensor<T> deform_offsets(const TsdNetwork<T>& net, const AnchorGrid& grid, const Tensor<T>& context) {
  auto h = net.point_embed(encode_anchors<T>(grid, net.cfg.num_freqs));
  for (const auto& unit : net.blocks) {
    h = nn::cross_attention(unit.attn, h, context);
    h = unit.ffn(h);
  }
  auto raw = net.head(net.final_norm(h));
  const T bound = static_cast<T>(net.cfg.max_offset);
  return diff::range_sigmoid(raw, -bound, bound);
}

template <typename T>
Tensor<T> deform(const TsdNetwork<T>& net, const AnchorGrid& grid, const Tensor<T>& context) {
  return diff::add(grid.to_tensor<T>(), deform_offsets(net, grid, context));
}

template struct TsdNetwork<float>;
template struct TsdNetwork<double>;
template Tensor<float> encode_anchors(const AnchorGrid&, std::size_t);
template Tensor<double> encode_anchors(const AnchorGrid&, std::size_t);
template Tensor<float> deform_offsets(const TsdNetwork<float>&, const AnchorGrid&, const Tensor<float>&);
template Tensor<double> deform_offsets(const TsdNetwork<double>&, const AnchorGrid&, const Tensor<double>&);
template Tensor<float> deform(const TsdNetwork<float>&, const AnchorGrid&, const Tensor<float>&);
template Tensor<double> deform(const TsdNetwork<double>&, const AnchorGrid&, const Tensor<double>&);

}  // namespace textsplat::tsd
