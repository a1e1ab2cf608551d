#include <cmath>
#include <cstring>
#include <functional>
#include <random>

#include "textsplat/diff/gradcheck.hpp"
#include "textsplat/diff/ops.hpp"
#include "textsplat/pipeline/pipeline.hpp"

namespace textsplat::pipeline {

namespace {

using Td = diff::Tensor<double>;

Td random_leaf(diff::Shape shape, diff::Rng& rng) {
  std::vector<double> v(diff::numel(shape));
  for (auto& x : v) x = rng.uniform(-1, 1);
  auto t = Td::from(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

CheckResult check_gradients() {
  diff::Rng rng(5);
  auto x = random_leaf({4, 6}, rng), w = random_leaf({6, 5}, rng), b = random_leaf({5}, rng);
  auto g = random_leaf({5}, rng), be = random_leaf({5}, rng);
  auto plane = random_leaf({2, 4, 4}, rng), uv = random_leaf({4, 2}, rng);
  auto loss = [&] {
    auto h = diff::silu(diff::layer_norm(diff::linear(x, w, b), g, be));
    auto s = diff::softmax_lastdim(h);
    auto f = diff::grid_sample_bilinear(plane, diff::scale(uv, 0.9));
    return diff::add(diff::sum(diff::mul(s, h)), diff::sum(diff::mul(f, f)));
  };
  const auto r = diff::gradcheck(loss, {x, w, b, g, be, plane, uv}, {"x", "w", "b", "gamma", "beta", "plane", "uv"});
  return {"op gradients", r.max_rel_error < 1e-5, fmt("max rel err %.3g", r.max_rel_error) + " at " + r.worst_input};
}

CheckResult check_offsets(const RunConfig& cfg) {
  auto mc = cfg.model;
  const auto prompts = text::PromptSet::builtin();
  double worst = 0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    mc.seed = cfg.model.seed + s;
    model::Model<double> m(mc);
    for (std::size_t p = 0; p < prompts.size(); p += 4) {
      auto d = tsd::deform_offsets(m.tsd(), m.grid(), m.embed(prompts[p]).to_tensor<double>());
      for (double v : d.values()) worst = std::max(worst, std::abs(v));
    }
  }
  model::Model<double> z(cfg.model);
  for (auto t : {z.tsd().head.weight, z.tsd().head.bias})
    for (auto& v : t.mutable_values()) v = 0;
  double zero_max = 0;
  const auto zd = tsd::deform_offsets(z.tsd(), z.grid(), z.embed("a cat").to_tensor<double>());
  for (double v : zd.values()) zero_max = std::max(zero_max, std::abs(v));
  const bool ok = worst < cfg.model.max_offset && zero_max == 0.0;
  return {"offset bound", ok, fmt("max |offset| %.6g", worst) + fmt(", zeroed head %.3g", zero_max)};
}

CheckResult check_attributes(const Generator& gen) {
  const auto& mc = gen.config().model;
  double op_lo = 1, op_hi = 0, s_lo = 1e9, s_hi = -1e9, q_err = 0;
  std::size_t n = 0;
  for (const auto& p : text::PromptSet::builtin().prompts) {
    const auto g = gen.generate(p).parts.gaussians;
    for (float v : g.opacity.values()) op_lo = std::min<double>(op_lo, v), op_hi = std::max<double>(op_hi, v);
    for (float v : g.scaling_raw.values()) s_lo = std::min<double>(s_lo, v), s_hi = std::max<double>(s_hi, v);
    const auto q = g.rotation.values();
    for (std::size_t i = 0; i < g.count(); ++i) {
      double nn = 0;
      for (int k = 0; k < 4; ++k) nn += double(q[i * 4 + k]) * q[i * 4 + k];
      q_err = std::max(q_err, std::abs(std::sqrt(nn) - 1.0));
    }
    n += g.count();
  }
  const bool ok = op_lo > 0 && op_hi < 1 && s_lo > mc.scale_min && s_hi < mc.scale_max && q_err <= 1e-6;
  return {"attribute ranges", ok,
          std::to_string(n) + " Gaussians" + fmt(", opacity [%.6g", op_lo) + fmt(", %.6g]", op_hi) +
              fmt(", log scale [%.6g", s_lo) + fmt(", %.6g]", s_hi) + fmt(", |q|-1 %.3g", q_err)};
}

CheckResult check_conservation(const Generator& gen) {
  const auto g = gen.generate("a red fox").parts.gaussians;
  const auto& t = gen.config().train;
  double worst = 0;
  for (double az : {0.0, 100.0, 230.0}) {
    const auto cam = splat::orbit_camera(az, 30, 2.0, t.fov_y, t.render_width, t.render_height, t.near, t.far);
    const auto img = splat::render(g, cam, t.background);
    for (std::size_t i = 0; i < img.alpha.size(); ++i)
      worst = std::max(worst, std::abs(img.alpha[i] + img.transmittance[i] - 1.0));
  }
  return {"render conservation", worst <= 1e-6, fmt("max |weights + transmittance - 1| %.3g", worst)};
}

CheckResult check_plane_independence(const RunConfig& cfg) {
  if (cfg.model.ttg_mode != ttg::TtgMode::separate) return {"plane independence", true, "skipped in single mode"};
  model::Model<float> m(cfg.model);
  const auto ctx = m.embed("a red fox").to_tensor<float>();
  const auto before = m.ttg()(ctx);
  auto names = m.store().names_with_prefix("ttg.xy.");
  auto p = m.store().get(names.front());
  p.mutable_values()[0] += 0.25f;
  const auto after = m.ttg()(ctx);
  auto same = [](const diff::Tensor<float>& a, const diff::Tensor<float>& b) {
    return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0;
  };
  const bool ok = !same(before.xy, after.xy) && same(before.xz, after.xz) && same(before.yz, after.yz);
  return {"plane independence", ok, "perturbed " + names.front()};
}

CheckResult check_determinism(const Generator& gen) {
  const auto a = gen.generate("a gray wolf").parts.gaussians;
  const auto b = gen.generate("a gray wolf").parts.gaussians;
  return {"generate determinism", bitwise_equal(a, b), ""};
}

CheckResult check_ply(const Generator& gen) {
  const auto g = gen.generate("a blue whale").parts.gaussians;
  std::random_device rd;
  const auto path = std::filesystem::temp_directory_path() / ("textsplat_check_" + std::to_string(rd()) + ".ply");
  export_ply(g, path);
  const auto back = import_ply(path);
  std::filesystem::remove(path);
  return {"ply round trip", bitwise_equal(g, back), std::to_string(g.count()) + " Gaussians"};
}

CheckResult check_config(const RunConfig& cfg) {
  const auto text = serialize_config(cfg);
  return {"config round trip", serialize_config(parse_config(text)) == text, ""};
}

}  // namespace

std::vector<CheckResult> run_checks(const RunConfig& cfg) {
  std::vector<CheckResult> out;
  auto guarded = [&](const std::string& name, const std::function<CheckResult()>& f) {
    try {
      out.push_back(f());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  Generator gen(cfg);
  guarded("op gradients", check_gradients);
  guarded("offset bound", [&] { return check_offsets(cfg); });
  guarded("attribute ranges", [&] { return check_attributes(gen); });
  guarded("render conservation", [&] { return check_conservation(gen); });
  guarded("plane independence", [&] { return check_plane_independence(cfg); });
  guarded("generate determinism", [&] { return check_determinism(gen); });
  guarded("ply round trip", [&] { return check_ply(gen); });
  guarded("config round trip", [&] { return check_config(cfg); });
  return out;
}

}  // namespace textsplat::pipeline
