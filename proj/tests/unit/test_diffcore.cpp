#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "textsplat/diff/checkpoint.hpp"
#include "textsplat/diff/gradcheck.hpp"
#include "textsplat/diff/ops.hpp"
#include "textsplat/diff/params.hpp"
#include "textsplat/diff/rng.hpp"

using namespace textsplat::diff;
using Td = Tensor<double>;

namespace {

Td random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  auto t = Td::from(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad(true);
  return t;
}

// Random linear functional of the output, so every output coordinate matters.
std::vector<double> projection(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(n);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return w;
}


}  // namespace

TEST(Matmul, IdentityAndSelection) {
  auto eye = Td::from({2, 2}, {1, 0, 0, 1});
  auto b = Td::from({2, 2}, {1, 2, 3, 4});
  auto c = matmul(eye, b);
  EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()), (std::vector<double>{1, 2, 3, 4}));
  auto r = matmul(Td::from({1, 2}, {1, 0}), Td::from({2, 1}, {5, 7}));
  EXPECT_EQ(r.shape(), (Shape{1, 1}));
  EXPECT_EQ(r[0], 5.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Td::zeros({2, 3}), Td::zeros({4, 5}));
    FAIL();
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
}

TEST(Matmul, FiniteDifferences) {
  Rng rng(1);
  auto a = random_tensor({4, 3}, rng);
  auto b = random_tensor({3, 5}, rng);
  auto w = projection(20, 2);
  auto res = gradcheck([&] { return dot_const(matmul(a, b), std::span<const double>(w)); }, {a, b});
  EXPECT_LT(res.max_rel_error, 1e-6) << res.worst_input;
}

TEST(Matmul, BatchedWithSharedRhs) {
  Rng rng(3);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto w = projection(12, 4);
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 2}));
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < 4; ++k) acc += a[(s * 3 + i) * 4 + k] * b[k * 2 + j];
        EXPECT_NEAR(c[(s * 3 + i) * 2 + j], acc, 1e-14);
      }
  auto res = gradcheck([&] { return dot_const(matmul(a, b), std::span<const double>(w)); }, {a, b});
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(5);
  auto x = random_tensor({3, 4, 5}, rng, -1, 1, false);
  auto w = Td::zeros({3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w.mutable_values()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
  auto y = conv2d_3x3(x, w, Td::zeros({3}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, CountsOverlappedOnes) {
  auto y = conv2d_3x3(Td::full({1, 3, 3}, 1.0), Td::full({1, 1, 3, 3}, 1.0), Td::zeros({1}));
  EXPECT_EQ(y[4], 9.0);
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(y[8], 4.0);
  EXPECT_EQ(y[1], 6.0);
}

TEST(Conv2d, ChannelMismatch) {
  EXPECT_THROW(conv2d_3x3(Td::zeros({2, 3, 3}), Td::zeros({1, 3, 3, 3}), Td::zeros({1})), ShapeError);
}

TEST(Conv2d, FiniteDifferences) {
  Rng rng(7);
  auto x = random_tensor({2, 5, 5}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto p = projection(75, 8);
  auto res = gradcheck([&] { return dot_const(conv2d_3x3(x, w, b), std::span<const double>(p)); }, {x, w, b},
                       {"x", "w", "b"});
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst_input;
}

TEST(LayerNorm, ConstantRowCollapsesToZero) {
  auto y = layer_norm(Td::full({1, 4}, 3.5), Td::full({4}, 1.0), Td::zeros({4}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalized) {
  auto y = layer_norm(Td::from({1, 2}, {1, -1}), Td::full({2}, 1.0), Td::zeros({2}), 1e-300);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], -1.0, 1e-12);
}

TEST(LayerNorm, ZeroMeanRowsAndFiniteDifferences) {
  Rng rng(9);
  auto x = random_tensor({3, 8}, rng, -2, 2);
  auto g = random_tensor({8}, rng, 0.5, 1.5);
  auto b = random_tensor({8}, rng);
  auto y = layer_norm(x, Td::full({8}, 1.0), Td::zeros({8}));
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0;
    for (std::size_t j = 0; j < 8; ++j) mu += y[r * 8 + j];
    EXPECT_LT(std::abs(mu / 8), 1e-6);
  }
  auto p = projection(24, 10);
  auto res = gradcheck([&] { return dot_const(layer_norm(x, g, b), std::span<const double>(p)); }, {x, g, b});
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst_input;
}

TEST(Softmax, Basics) {
  EXPECT_EQ(softmax_lastdim(Td::from({1}, {4.2}))[0], 1.0);
  auto u = softmax_lastdim(Td::from({3}, {0.7, 0.7, 0.7}));
  for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, MatchesDirectFormula) {
  Rng rng(11);
  auto x = random_tensor({5, 7}, rng, -3, 3);
  auto y = softmax_lastdim(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0, rowsum = 0;
    for (std::size_t j = 0; j < 7; ++j) total += std::exp(x[r * 7 + j]);
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_LT(std::abs(y[r * 7 + j] - std::exp(x[r * 7 + j]) / total), 1e-12);
      rowsum += y[r * 7 + j];
    }
    EXPECT_NEAR(rowsum, 1.0, 1e-6);
  }
  auto p = projection(35, 12);
  auto res = gradcheck([&] { return dot_const(softmax_lastdim(x), std::span<const double>(p)); }, {x});
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Activation, ValuesAndGradients) {
  EXPECT_EQ(sigmoid(Td::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(silu(Td::scalar(0.0)).item(), 0.0);
  Rng rng(13);
  auto x = random_tensor({10}, rng, -4, 4);
  auto p = projection(10, 14);
  for (auto kind : {Activation::silu, Activation::sigmoid}) {
    auto res = gradcheck([&] { return dot_const(activation(x, kind), std::span<const double>(p)); }, {x});
    EXPECT_LT(res.max_rel_error, 1e-7);
  }
}

TEST(Activation, RangeSigmoidMatchesFormulaAndStaysInside) {
  EXPECT_EQ(range_sigmoid(Td::scalar(0.0), -0.2, 0.2).item(), 0.0);
  EXPECT_EQ(range_sigmoid(Td::scalar(0.0), -9.0, -3.0).item(), -6.0);
  Rng rng(15);
  auto x = random_tensor({12}, rng, -5, 5);
  auto y = range_sigmoid(x, -0.3, 0.3);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_NEAR(y[i], 0.6 / (1 + std::exp(-x[i])) - 0.3, 1e-15);
  }
  auto p = projection(12, 16);
  auto res = gradcheck([&] { return dot_const(range_sigmoid(x, -0.3, 0.3), std::span<const double>(p)); }, {x});
  EXPECT_LT(res.max_rel_error, 1e-7);
  auto big = Tensor<float>::from({2}, {1e4f, -1e4f});
  auto yb = range_sigmoid(big, -0.2f, 0.2f);
  EXPECT_LT(yb[0], 0.2f);
  EXPECT_GT(yb[1], -0.2f);
  auto ys = range_sigmoid(big, -9.0f, -3.0f);
  EXPECT_LT(ys[0], -3.0f);
  EXPECT_GT(ys[1], -9.0f);
  auto yo = range_sigmoid(big, 0.0f, 1.0f);
  EXPECT_LT(yo[0], 1.0f);
  EXPECT_GT(yo[1], 0.0f);
}

namespace {

// Independent four-vertex formula with align-corners mapping.
std::vector<double> four_vertex_sample(const Td& plane, double u, double v) {
  const std::size_t c = plane.dim(0), h = plane.dim(1), w = plane.dim(2);
  u = std::clamp(u, -1.0, 1.0);
  v = std::clamp(v, -1.0, 1.0);
  const double px = (u + 1) / 2 * (w - 1), py = (v + 1) / 2 * (h - 1);
  const double fx0 = std::floor(px), fy0 = std::floor(py);
  std::vector<double> out(c, 0.0);
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const double cx = fx0 + dx, cy = fy0 + dy;
      const double wgt = (1 - std::abs(px - cx)) * (1 - std::abs(py - cy));
      if (cx < 0 || cy < 0 || cx > w - 1 || cy > h - 1 || wgt <= 0) continue;
      for (std::size_t ch = 0; ch < c; ++ch)
        out[ch] += wgt * plane[(ch * h + static_cast<std::size_t>(cy)) * w + static_cast<std::size_t>(cx)];
    }
  return out;
}

}  // namespace

TEST(GridSample, ConstantPlaneAndCorner) {
  auto plane = Td::full({2, 4, 5}, 0.25);
  auto s = grid_sample_bilinear(plane, Td::from({2, 2}, {0.3, -0.7, 0.9, 0.1}));
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  Rng rng(15);
  auto rp = random_tensor({2, 4, 5}, rng, -1, 1, false);
  auto corner = grid_sample_bilinear(rp, Td::from({1, 2}, {-1.0, -1.0}));
  EXPECT_EQ(corner[0], rp[0]);
  EXPECT_EQ(corner[1], rp[20]);
}

TEST(GridSample, MatchesFourVertexOracleAndFiniteDifferences) {
  Rng rng(17);
  auto plane = random_tensor({3, 6, 7}, rng);
  auto coords = random_tensor({9, 2}, rng, -0.98, 0.98);
  auto s = grid_sample_bilinear(plane, coords);
  for (std::size_t i = 0; i < 9; ++i) {
    auto ref = four_vertex_sample(plane, coords[2 * i], coords[2 * i + 1]);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_LT(std::abs(s[i * 3 + c] - ref[c]), 1e-12);
  }
  auto p = projection(27, 18);
  auto res = gradcheck([&] { return dot_const(grid_sample_bilinear(plane, coords), std::span<const double>(p)); },
                       {plane, coords}, {"plane", "coords"});
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst_input;
}

TEST(GridSample, OutOfRangeIsClampedWithZeroCoordinateGradient) {
  Rng rng(19);
  auto plane = random_tensor({1, 3, 3}, rng, -1, 1, false);
  auto coords = Td::from({1, 2}, {1.5, -2.0});
  coords.set_requires_grad(true);
  auto s = grid_sample_bilinear(plane, coords);
  EXPECT_EQ(s[0], plane[2]);  // v=-1 -> row 0, u=+1 -> col 2
  sum(s).backward();
  EXPECT_EQ(coords.grad()[0], 0.0);
  EXPECT_EQ(coords.grad()[1], 0.0);
}

namespace {

std::vector<double> upsample_oracle(const Td& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out(c * 4 * h * w);
  auto src = [](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    const double s = std::max(0.0, (o + 0.5) / 2.0 - 0.5);
    i0 = std::min<std::size_t>(static_cast<std::size_t>(std::floor(s)), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    f = s - static_cast<double>(i0);
  };
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < 2 * h; ++oy)
      for (std::size_t ox = 0; ox < 2 * w; ++ox) {
        std::size_t y0, y1, x0, x1;
        double fy, fx;
        src(oy, h, y0, y1, fy);
        src(ox, w, x0, x1, fx);
        auto at = [&](std::size_t yy, std::size_t xx) { return x[(ch * h + yy) * w + xx]; };
        out[(ch * 2 * h + oy) * 2 * w + ox] = (1 - fy) * (1 - fx) * at(y0, x0) + (1 - fy) * fx * at(y0, x1) +
                                              fy * (1 - fx) * at(y1, x0) + fy * fx * at(y1, x1);
      }
  return out;
}

}  // namespace

TEST(Upsample, ConstantAndSingleSample) {
  auto c = upsample2x_bilinear(Td::full({2, 3, 2}, -1.5));
  EXPECT_EQ(c.shape(), (Shape{2, 6, 4}));
  for (double v : c.values()) EXPECT_EQ(v, -1.5);
  auto one = upsample2x_bilinear(Td::from({1, 1, 1}, {4.0}));
  EXPECT_EQ(one.shape(), (Shape{1, 2, 2}));
  for (double v : one.values()) EXPECT_EQ(v, 4.0);
}

TEST(Upsample, MatchesOracleAndFiniteDifferences) {
  Rng rng(21);
  auto x = random_tensor({2, 3, 4}, rng);
  auto y = upsample2x_bilinear(x);
  auto ref = upsample_oracle(x);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_LT(std::abs(y[i] - ref[i]), 1e-12);
  auto p = projection(y.size(), 22);
  auto res = gradcheck([&] { return dot_const(upsample2x_bilinear(x), std::span<const double>(p)); }, {x});
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Backward, SumAndQuadratic) {
  auto p = Td::from({3}, {0.5, -2, 7});
  p.set_requires_grad(true);
  sum(p).backward();
  for (double g : p.grad()) EXPECT_EQ(g, 1.0);
  auto q = Td::from({2}, {1, 2});
  q.set_requires_grad(true);
  sum(mul(q, q)).backward();
  EXPECT_EQ(q.grad()[0], 2.0);
  EXPECT_EQ(q.grad()[1], 4.0);
}

TEST(Backward, SecondCallIsAnError) {
  auto p = Td::from({2}, {1, 2});
  p.set_requires_grad(true);
  auto loss = sum(scale(p, 3.0));
  loss.backward();
  EXPECT_THROW(loss.backward(), GraphError);
  auto fresh = sum(scale(p, 3.0));
  EXPECT_NO_THROW(fresh.backward());
  EXPECT_EQ(p.grad()[0], 6.0);
}

TEST(Backward, NoGradTensorsNeverGetBuffers) {
  auto c = Td::from({2}, {1, 2});
  auto p = Td::from({2}, {3, 4});
  p.set_requires_grad(true);
  sum(mul(c, p)).backward();
  EXPECT_FALSE(c.has_grad());
  EXPECT_TRUE(p.has_grad());
}

TEST(Backward, NormalizeRowsHandlesDegenerateRows) {
  auto q = Td::from({2, 4}, {0, 0, 0, 0, 1, 2, 2, 4});
  q.set_requires_grad(true);
  auto y = normalize_rows_or_identity(q, 1e-8);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_NEAR(y[4] * y[4] + y[5] * y[5] + y[6] * y[6] + y[7] * y[7], 1.0, 1e-15);
  auto p = projection(8, 23);
  dot_const(y, std::span<const double>(p)).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(q.grad()[i], 0.0);
  Rng rng(24);
  auto r = random_tensor({5, 4}, rng);
  auto res = gradcheck([&] { return dot_const(normalize_rows_or_identity(r, 1e-8), std::span<const double>(projection(20, 25))); }, {r});
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(Params, ReinitializeIsBitIdentical) {
  ParameterStore<float> store(42);
  ParamScope<float> scope(store, "m", 42);
  auto w = scope.uniform("w", {4, 4}, 4);
  auto before = std::vector<float>(w.values().begin(), w.values().end());
  w.mutable_values()[0] = 99.f;
  store.reinitialize();
  EXPECT_EQ(std::vector<float>(w.values().begin(), w.values().end()), before);
  for (float v : before) EXPECT_LE(std::abs(v), 0.5f);
  EXPECT_THROW(scope.zeros("w", {1}), std::invalid_argument);
}

TEST(Params, SameSeedSameLocalNamesGiveSameValues) {
  ParameterStore<double> store;
  auto a = ParamScope<double>(store, "a", 5).child("blk").uniform("w", {3}, 3);
  auto b = ParamScope<double>(store, "b", 5).child("blk").uniform("w", {3}, 3);
  auto c = ParamScope<double>(store, "c", 6).child("blk").uniform("w", {3}, 3);
  EXPECT_EQ(std::vector<double>(a.values().begin(), a.values().end()),
            std::vector<double>(b.values().begin(), b.values().end()));
  EXPECT_NE(a[0], c[0]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore<double> store;
  ParamScope<double> scope(store, "", 1);
  auto p = scope.uniform("p", {4}, 1);
  auto before = std::vector<double>(p.values().begin(), p.values().end());
  auto w = std::vector<double>{1.0, -2.0, 0.5, -0.01};
  dot_const(p, std::span<const double>(w)).backward();
  adam_step(store, {0.1, 0.9, 0.99, 0.0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i] - before[i], -0.1 * (w[i] > 0 ? 1 : -1), 1e-12);
  EXPECT_FALSE(p.has_grad());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore<float> store;
  ParamScope<float> scope(store, "", 1);
  auto p = scope.uniform("p", {4}, 1);
  auto before = std::vector<float>(p.values().begin(), p.values().end());
  sum(scale(p, 0.0f)).backward();
  adam_step(store, {});
  EXPECT_EQ(std::vector<float>(p.values().begin(), p.values().end()), before);
}

TEST(Adam, MissingGradientNamesParameter) {
  ParameterStore<float> store;
  ParamScope<float> scope(store, "net", 1);
  auto p = scope.uniform("used", {2}, 1);
  scope.zeros("unused", {2});
  sum(p).backward();
  try {
    adam_step(store, {});
    FAIL();
  } catch (const MissingGradient& e) {
    EXPECT_NE(std::string(e.what()).find("net.unused"), std::string::npos);
  }
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  ParameterStore<double> store;
  ParamScope<double> scope(store, "", 3);
  auto p = scope.uniform("p", {5}, 1);
  auto target = Td::from({5}, {0.3, -0.2, 0.8, 0.0, -0.5});
  for (int it = 0; it < 100; ++it) {
    auto d = sub(p, target);
    sum(mul(d, d)).backward();
    adam_step(store, {0.05, 0.9, 0.99, 1e-8});
  }
  double dist = 0;
  for (std::size_t i = 0; i < 5; ++i) dist += (p[i] - target[i]) * (p[i] - target[i]);
  EXPECT_LT(std::sqrt(dist), 1e-2);
}

TEST(Checkpoint, RoundTripIsBitExactIncludingMoments) {
  auto path = std::filesystem::temp_directory_path() / "textsplat_ckpt_test.aspt";
  ParameterStore<float> a;
  ParamScope<float> sa(a, "net", 7);
  auto w = sa.uniform("w", {3, 2}, 2);
  sa.zeros("b", {2});
  sum(mul(w, w)).backward();
  sum(a.get("net.b")).backward();
  adam_step(a, {0.01, 0.9, 0.99, 1e-8});
  save_checkpoint(a, path);

  ParameterStore<float> b;
  ParamScope<float> sb(b, "net", 8);
  sb.uniform("w", {3, 2}, 2);
  sb.zeros("b", {2});
  load_checkpoint(b, path);
  for (const auto& name : a.names()) {
    auto x = a.get(name).values();
    auto y = b.get(name).values();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    EXPECT_EQ(a.moments().at(name).m, b.moments().at(name).m);
    EXPECT_EQ(a.moments().at(name).v, b.moments().at(name).v);
  }
  EXPECT_EQ(b.step(), 1u);

  ParameterStore<float> wrong;
  ParamScope<float>(wrong, "net", 1).uniform("w", {2, 3}, 2);
  ParamScope<float>(wrong, "net", 1).zeros("b", {2});
  EXPECT_THROW(load_checkpoint(wrong, path), CheckpointError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadMagic) {
  auto path = std::filesystem::temp_directory_path() / "textsplat_bad.aspt";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE0000";
  }
  ParameterStore<float> s;
  EXPECT_THROW(load_checkpoint(s, path), CheckpointError);
  std::filesystem::remove(path);
}
