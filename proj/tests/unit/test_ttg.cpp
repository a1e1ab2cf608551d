#include <gtest/gtest.h>

#include <set>

#include "textsplat/diff/gradcheck.hpp"
#include "textsplat/diff/rng.hpp"
#include "textsplat/text/embedding.hpp"
#include "textsplat/ttg/ttg.hpp"

using namespace textsplat;
using diff::ParameterStore;
using diff::ParamScope;
using diff::Tensor;

namespace {

ttg::TtgConfig small_config() {
  ttg::TtgConfig c;
  c.channels = 16;
  c.base_res = 8;
  c.upsamples = 2;
  c.width = 16;
  c.context_dim = 8;
  c.num_heads = 2;
  c.ffn_mult = 2;
  return c;
}

ttg::TtgConfig tiny_config() {
  ttg::TtgConfig c;
  c.channels = 3;
  c.base_res = 2;
  c.upsamples = 1;
  c.width = 4;
  c.context_dim = 4;
  c.num_heads = 1;
  c.ffn_mult = 2;
  c.low_blocks = 1;
  return c;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(static_cast<double>(a[i]) - b[i]));
  return d;
}

}  // namespace

TEST(PlaneGenerator, OutputShapeFollowsResolutionLaw) {
  ParameterStore<float> store;
  auto cfg = small_config();
  auto gen = ttg::PlaneGenerator<float>::create(ParamScope<float>(store, "g", 1), cfg, cfg.channels);
  auto y = text::embed("a red chair", 6, 8, 0).to_tensor<float>();
  auto plane = ttg::generate_plane(gen, y);
  EXPECT_EQ(plane.shape(), (diff::Shape{16, 32, 32}));
  for (std::size_t u = 0; u < 4; ++u) {
    cfg.upsamples = u;
    EXPECT_EQ(cfg.resolution(), 8u << u);
  }
}

TEST(PlaneGenerator, ZeroResidualBranchesGiveTextIndependentPath) {
  ParameterStore<double> store;
  auto cfg = small_config();
  cfg.base_res = 4;
  auto gen = ttg::PlaneGenerator<double>::create(ParamScope<double>(store, "g", 2), cfg, cfg.channels);
  gen.zero_residual_branches();
  Tensor<double> h = gen.base_query;
  for (const auto& s : gen.up) h = nn::upsample_block(s.up, h);
  auto expected = gen.out_conv(h);
  auto a = ttg::generate_plane(gen, text::embed("a red chair", 6, 8, 0).to_tensor<double>());
  auto b = ttg::generate_plane(gen, text::embed("a blue owl", 6, 8, 0).to_tensor<double>());
  EXPECT_EQ(max_abs_diff(a, expected), 0.0);
  EXPECT_EQ(max_abs_diff(b, expected), 0.0);
}

TEST(PlaneGenerator, EmbeddingGradientMatchesFiniteDifferences) {
  ParameterStore<double> store;
  auto cfg = tiny_config();
  auto gen = ttg::PlaneGenerator<double>::create(ParamScope<double>(store, "g", 3), cfg, cfg.channels);
  auto y = text::embed("a fox", 3, 4, 1).to_tensor<double>();
  y.set_requires_grad(true);
  diff::Rng rng(5);
  std::vector<double> proj(cfg.channels * 4 * 4);
  for (auto& v : proj) v = rng.normal();
  auto res = diff::gradcheck([&] { return diff::dot_const(ttg::generate_plane(gen, y), std::span<const double>(proj)); },
                             {y}, {"y"});
  EXPECT_LT(res.max_rel_error, 1e-3);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(PlaneGenerator, DifferentTextGivesDifferentPlanes) {
  ParameterStore<float> store;
  auto cfg = small_config();
  auto gen = ttg::PlaneGenerator<float>::create(ParamScope<float>(store, "g", 4), cfg, cfg.channels);
  auto a = ttg::generate_plane(gen, text::embed("a red chair", 6, 8, 0).to_tensor<float>());
  auto b = ttg::generate_plane(gen, text::embed("a blue chair", 6, 8, 0).to_tensor<float>());
  EXPECT_GT(max_abs_diff(a, b), 0.0);
}

TEST(Triplane, SeparateGeneratorsHaveDisjointParameters) {
  ParameterStore<float> store;
  auto tg = ttg::TriplaneGenerator<float>::create(store, "ttg", 7, tiny_config(), ttg::TtgMode::separate, 1.2);
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const char* p : {"ttg.xy.", "ttg.xz.", "ttg.yz."}) {
    auto names = store.names_with_prefix(p);
    EXPECT_FALSE(names.empty());
    total += names.size();
    seen.insert(names.begin(), names.end());
  }
  EXPECT_EQ(seen.size(), total);
  EXPECT_EQ(total, store.names().size());

  auto y = text::embed("a dog", 3, 4, 0).to_tensor<float>();
  auto before = tg(y);
  auto w = store.get("ttg.xy.low0.res.conv1.weight");
  w.mutable_values()[0] += 0.5f;
  auto after = tg(y);
  EXPECT_GT(max_abs_diff(before.xy, after.xy), 0.0);
  EXPECT_EQ(max_abs_diff(before.xz, after.xz), 0.0);
  EXPECT_EQ(max_abs_diff(before.yz, after.yz), 0.0);
}

TEST(Triplane, IdenticalSeedsGiveIdenticalPlanes) {
  ParameterStore<double> store;
  auto cfg = tiny_config();
  auto gx = ttg::PlaneGenerator<double>::create(ParamScope<double>(store, "ttg.xy", 11), cfg, cfg.channels);
  auto gy = ttg::PlaneGenerator<double>::create(ParamScope<double>(store, "ttg.xz", 11), cfg, cfg.channels);
  auto gz = ttg::PlaneGenerator<double>::create(ParamScope<double>(store, "ttg.yz", 11), cfg, cfg.channels);
  auto tri = ttg::generate_triplane(gx, gy, gz, text::embed("a cat", 3, 4, 0).to_tensor<double>());
  EXPECT_EQ(max_abs_diff(tri.xy, tri.xz), 0.0);
  EXPECT_EQ(max_abs_diff(tri.xy, tri.yz), 0.0);
  EXPECT_EQ(tri.channels(), 3u);
  EXPECT_EQ(tri.resolution(), 4u);
}

TEST(Triplane, MismatchedGeneratorsAreRejected) {
  ParameterStore<float> store;
  auto cfg = tiny_config();
  auto other = cfg;
  other.width = 8;
  auto a = ttg::PlaneGenerator<float>::create(ParamScope<float>(store, "a", 1), cfg, cfg.channels);
  auto b = ttg::PlaneGenerator<float>::create(ParamScope<float>(store, "b", 1), other, cfg.channels);
  auto y = text::embed("a cat", 3, 4, 0).to_tensor<float>();
  EXPECT_THROW(ttg::generate_triplane(a, a, b, y), std::invalid_argument);
}

TEST(SingleGenerator, SplitsChannelsAndSharesParameters) {
  ParameterStore<float> store;
  auto cfg = small_config();
  cfg.base_res = 4;
  auto gen = ttg::PlaneGenerator<float>::create(ParamScope<float>(store, "g", 5), cfg, 48);
  auto y = text::embed("a panda", 6, 8, 0).to_tensor<float>();
  auto full = ttg::generate_plane(gen, y);
  auto tri = ttg::single_generator_mode(gen, y);
  EXPECT_EQ(tri.xy.shape(), (diff::Shape{16, 16, 16}));
  EXPECT_EQ(tri.xz.shape(), (diff::Shape{16, 16, 16}));
  EXPECT_EQ(tri.yz.shape(), (diff::Shape{16, 16, 16}));
  const std::size_t plane = 16 * 16 * 16;
  for (std::size_t i = 0; i < plane; ++i) {
    ASSERT_EQ(tri.xy[i], full[i]);
    ASSERT_EQ(tri.xz[i], full[plane + i]);
    ASSERT_EQ(tri.yz[i], full[2 * plane + i]);
  }
  gen.low[0].res.conv1.weight.mutable_values()[3] += 0.5f;
  auto moved = ttg::single_generator_mode(gen, y);
  EXPECT_GT(max_abs_diff(moved.xy, tri.xy), 0.0);
  EXPECT_GT(max_abs_diff(moved.xz, tri.xz), 0.0);
  EXPECT_GT(max_abs_diff(moved.yz, tri.yz), 0.0);

  auto bad = ttg::PlaneGenerator<float>::create(ParamScope<float>(store, "bad", 5), cfg, 16);
  EXPECT_THROW(ttg::single_generator_mode(bad, y), std::invalid_argument);
}

TEST(SingleGenerator, ModeToggleUsesOneSharedGenerator) {
  ParameterStore<float> store;
  auto tg = ttg::TriplaneGenerator<float>::create(store, "ttg", 1, tiny_config(), ttg::TtgMode::single, 1.2);
  EXPECT_EQ(tg.generators.size(), 1u);
  EXPECT_EQ(store.names_with_prefix("ttg.shared.").size(), store.names().size());
  auto tri = tg(text::embed("a cat", 3, 4, 0).to_tensor<float>());
  EXPECT_EQ(tri.channels(), 3u);
}
