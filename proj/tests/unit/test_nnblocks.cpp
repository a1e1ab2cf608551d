#include <gtest/gtest.h>

#include <cmath>

#include "textsplat/diff/gradcheck.hpp"
#include "textsplat/diff/rng.hpp"
#include "textsplat/nn/blocks.hpp"
#include "../support/oracles.hpp"

using namespace textsplat;
using namespace textsplat::nn;
using diff::Rng;
using diff::Shape;
using Td = diff::Tensor<double>;

namespace {

Td random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(diff::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  auto t = Td::from(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad(true);
  return t;
}

std::vector<double> projection(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}

// Perturb LayerNorm affine parameters away from (1, 0) so they are exercised.
void jitter_store(diff::ParameterStore<double>& store, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& [name, e] : store.entries()) {
    auto t = e.tensor;
    for (auto& v : t.mutable_values()) v += rng.uniform(-0.2, 0.2);
  }
}

}  // namespace

TEST(CrossAttention, SingleKeyGivesUnitScores) {
  diff::ParameterStore<double> store;
  auto block = CrossAttentionBlock<double>::create({store, "a", 1}, 8, 6, 2);
  Rng rng(2);
  auto q = random_tensor({3, 8}, rng);
  auto y = random_tensor({1, 6}, rng);
  for (const auto& s : attention_scores(block, q, y))
    for (double v : s.values()) EXPECT_EQ(v, 1.0);
  // Output = residual + W_O(W_V(y0)) for every query.
  auto out = cross_attention(block, q, y);
  auto wv = diff::matmul(y, block.w_v);
  auto proj = block.out(wv);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out[i * 8 + j], q[i * 8 + j] + proj[j], 1e-12);
}

TEST(CrossAttention, IdenticalKeysGiveUniformScores) {
  diff::ParameterStore<double> store;
  auto block = CrossAttentionBlock<double>::create({store, "a", 3}, 8, 4, 4);
  Rng rng(4);
  auto q = random_tensor({5, 8}, rng);
  std::vector<double> row{0.3, -0.1, 0.8, 0.2};
  std::vector<double> ctx;
  for (int l = 0; l < 4; ++l) ctx.insert(ctx.end(), row.begin(), row.end());
  for (const auto& s : attention_scores(block, q, Td::from({4, 4}, ctx)))
    for (double v : s.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(CrossAttention, MatchesDenseFormula) {
  for (std::size_t heads : {1, 2, 4}) {
    diff::ParameterStore<double> store;
    auto block = CrossAttentionBlock<double>::create({store, "a", 5}, 8, 6, heads);
    jitter_store(store, 6);
    Rng rng(7);
    auto q = random_tensor({3, 8}, rng);
    auto y = random_tensor({4, 6}, rng);
    auto out = cross_attention(block, q, y);
    auto ref = oracle::dense_attention(block, q, y);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_LT(std::abs(out[i * 8 + j] - ref[i][j]), 1e-10) << heads;
  }
}

TEST(CrossAttention, ScoreRowsSumToOneAndBatchEquivariance) {
  diff::ParameterStore<double> store;
  auto block = CrossAttentionBlock<double>::create({store, "a", 8}, 8, 5, 2);
  Rng rng(9);
  auto q = random_tensor({4, 8}, rng, -2, 2);
  auto y = random_tensor({6, 5}, rng);
  for (const auto& s : attention_scores(block, q, y)) {
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0;
      for (std::size_t l = 0; l < 6; ++l) total += s[i * 6 + l];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<double> pq;
  for (auto r : perm) pq.insert(pq.end(), q.values().begin() + r * 8, q.values().begin() + (r + 1) * 8);
  auto out = cross_attention(block, q, y);
  auto pout = cross_attention(block, Td::from({4, 8}, pq), y);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(pout[i * 8 + j], out[perm[i] * 8 + j]);
}

TEST(CrossAttention, DimensionMismatch) {
  diff::ParameterStore<double> store;
  auto block = CrossAttentionBlock<double>::create({store, "a", 1}, 8, 4, 2);
  EXPECT_THROW(cross_attention(block, Td::zeros({2, 6}), Td::zeros({3, 4})), diff::ShapeError);
  EXPECT_THROW(CrossAttentionBlock<double>::create({store, "b", 1}, 6, 4, 4), std::invalid_argument);
}

TEST(SpatialTransformer, ZeroOutputLayersIsIdentityAndShape) {
  diff::ParameterStore<double> store;
  auto block = SpatialTransformerBlock<double>::create({store, "st", 1}, 8, 6, 2, 32);
  Rng rng(10);
  auto fmap = random_tensor({8, 4, 4}, rng);
  auto y = random_tensor({3, 6}, rng);
  auto out = spatial_transformer(block, fmap, y);
  EXPECT_EQ(out.shape(), (Shape{8, 4, 4}));
  block.zero_output_layers();
  auto id = spatial_transformer(block, fmap, y);
  for (std::size_t i = 0; i < fmap.size(); ++i) EXPECT_EQ(id[i], fmap[i]);
  EXPECT_THROW(spatial_transformer(block, Td::zeros({4, 2, 2}), y), diff::ShapeError);
}

TEST(SpatialTransformer, FiniteDifferencesInFeatureMapAndContext) {
  diff::ParameterStore<double> store;
  auto block = SpatialTransformerBlock<double>::create({store, "st", 2}, 8, 6, 2, 16);
  jitter_store(store, 3);
  Rng rng(11);
  auto fmap = random_tensor({8, 3, 3}, rng, -1, 1, true);
  auto y = random_tensor({3, 6}, rng, -1, 1, true);
  auto p = projection(72, 12);
  auto res = diff::gradcheck(
      [&] { return diff::dot_const(spatial_transformer(block, fmap, y), std::span<const double>(p)); }, {fmap, y},
      {"fmap", "context"});
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_input;
}

TEST(ResConv, ZeroConvIsIdentityAndShape) {
  diff::ParameterStore<double> store;
  auto block = ResConvBlock<double>::create({store, "rc", 1}, 16);
  Rng rng(13);
  auto fmap = random_tensor({16, 8, 8}, rng);
  EXPECT_EQ(res_conv(block, fmap).shape(), (Shape{16, 8, 8}));
  block.conv1.zero();
  block.conv2.zero();
  auto id = res_conv(block, fmap);
  for (std::size_t i = 0; i < fmap.size(); ++i) EXPECT_EQ(id[i], fmap[i]);
}

TEST(ResConv, FiniteDifferences) {
  diff::ParameterStore<double> store;
  auto block = ResConvBlock<double>::create({store, "rc", 2}, 4);
  jitter_store(store, 5);
  Rng rng(14);
  auto fmap = random_tensor({4, 4, 4}, rng, -1, 1, true);
  auto p = projection(64, 15);
  std::vector<Td> inputs{fmap};
  for (const auto& [name, e] : store.entries()) inputs.push_back(e.tensor);
  auto res = diff::gradcheck([&] { return diff::dot_const(res_conv(block, fmap), std::span<const double>(p)); },
                             inputs);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst_input;
}

TEST(Upsample, ShapeDeltaKernelAndGradients) {
  diff::ParameterStore<double> store;
  auto block = UpsampleBlock<double>::create({store, "up", 1}, 4);
  Rng rng(16);
  auto fmap = random_tensor({4, 4, 4}, rng, -1, 1, true);
  EXPECT_EQ(upsample_block(block, fmap).shape(), (Shape{4, 8, 8}));
  auto p = projection(256, 17);
  auto res = diff::gradcheck(
      [&] { return diff::dot_const(upsample_block(block, fmap), std::span<const double>(p)); },
      {fmap, block.conv.weight, block.conv.bias});
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst_input;

  block.conv.zero();
  for (std::size_t c = 0; c < 4; ++c) block.conv.weight.mutable_values()[((c * 4 + c) * 3 + 1) * 3 + 1] = 1.0;
  auto a = upsample_block(block, fmap);
  auto b = diff::upsample2x_bilinear(fmap);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(PosEnc, OriginShapeAndDistinctness) {
  auto pe = posenc_2d<double>(8, 8, 32);
  EXPECT_EQ(pe.shape(), (Shape{32, 8, 8}));
  const std::size_t bands = 8;
  for (std::size_t k = 0; k < bands; ++k) {
    EXPECT_EQ(pe[(0 * bands + k) * 64], 0.0);
    EXPECT_EQ(pe[(1 * bands + k) * 64], 1.0);
    EXPECT_EQ(pe[(2 * bands + k) * 64], 0.0);
    EXPECT_EQ(pe[(3 * bands + k) * 64], 1.0);
  }
  EXPECT_THROW(posenc_2d<double>(4, 4, 6), std::invalid_argument);

  // Exhaustive pairwise distinctness at 64x64.
  const std::size_t n = 64, c = 8;
  auto big = posenc_2d<double>(n, n, c);
  double min_dist = 1e9;
  for (std::size_t p = 0; p < n * n; ++p)
    for (std::size_t q = p + 1; q < n * n; ++q) {
      double d2 = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double diff = big[ch * n * n + p] - big[ch * n * n + q];
        d2 += diff * diff;
      }
      min_dist = std::min(min_dist, d2);
    }
  EXPECT_GT(min_dist, 0.0);
}
