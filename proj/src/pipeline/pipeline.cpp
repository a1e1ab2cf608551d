#include "textsplat/pipeline/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "textsplat/diff/checkpoint.hpp"
#include "textsplat/diff/ops.hpp"
#include "textsplat/util/binary_io.hpp"

namespace textsplat::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

const std::vector<std::string>& ply_properties() {
  static const std::vector<std::string> props{"x",       "y",       "z",       "nx",      "ny",      "nz",
                                              "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity", "scale_0", "scale_1",
                                              "scale_2", "rot_0",   "rot_1",   "rot_2",   "rot_3"};
  return props;
}

}  // namespace

Generator::Generator(const RunConfig& cfg) : cfg_(cfg), model_(cfg.model) {}

Generator::Generator(const RunConfig& cfg, const std::filesystem::path& checkpoint) : Generator(cfg) {
  if (!std::filesystem::exists(checkpoint)) {
    throw diff::CheckpointError("checkpoint not found: " + checkpoint.string());
  }
  diff::load_checkpoint(model_.store(), checkpoint);
}

GenerateResult Generator::generate(const text::TextEmbedding& embedding) const {
  diff::NoGradGuard no_grad;
  const auto t0 = Clock::now();
  GenerateResult r;
  r.parts = model_.forward(embedding.to_tensor<float>());
  r.latency_ms = ms_since(t0);
  return r;
}

GenerateResult Generator::generate(const std::string& prompt) const {
  const auto t0 = Clock::now();
  auto r = generate(model_.embed(prompt));
  r.latency_ms = ms_since(t0);  // includes embedding lookup
  return r;
}

std::vector<Gaussians> Generator::interpolate(const std::string& a, const std::string& b, std::size_t steps) const {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be >= 2");
  const auto ea = model_.embed(a), eb = model_.embed(b);
  std::vector<Gaussians> out;
  for (std::size_t k = 0; k < steps; ++k) {
    // Exact endpoints, independent of blend rounding.
    const auto e = k == 0 ? ea : k + 1 == steps ? eb
                                               : text::interpolate(ea, eb, static_cast<double>(k) / (steps - 1));
    out.push_back(generate(e).parts.gaussians);
  }
  return out;
}

void export_ply(const Gaussians& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write PLY file " + path.string());
  const std::size_t m = g.count();
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << m << "\n";
  for (const auto& p : ply_properties()) out << "property float " << p << "\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < m; ++i) {
    for (int k = 0; k < 3; ++k) util::write_f32(out, g.centers[i * 3 + k]);
    for (int k = 0; k < 3; ++k) util::write_f32(out, 0.0f);
    for (int k = 0; k < 3; ++k) util::write_f32(out, g.sh_dc[i * 3 + k]);
    util::write_f32(out, g.opacity_raw[i]);
    for (int k = 0; k < 3; ++k) util::write_f32(out, g.scaling_raw[i * 3 + k]);
    for (int k = 0; k < 4; ++k) util::write_f32(out, g.rotation[i * 4 + k]);
  }
  if (!out) throw std::runtime_error("failed writing PLY file " + path.string());
}

Gaussians import_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw util::FormatError("cannot open PLY file " + path.string());
  const std::string src = path.string();
  std::string line;
  auto next = [&] {
    if (!std::getline(in, line)) throw util::FormatError(src + ": truncated PLY header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next() != "ply") throw util::FormatError(src + ": not a PLY file");
  if (next() != "format binary_little_endian 1.0") throw util::FormatError(src + ": expected binary_little_endian 1.0");
  std::size_t m = 0;
  bool have_vertex = false;
  std::vector<std::string> props;
  while (next() != "end_header") {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment" || word == "obj_info") continue;
    if (word == "element") {
      std::string name;
      ls >> name >> m;
      if (name != "vertex" || have_vertex) throw util::FormatError(src + ": unsupported element \"" + name + "\"");
      have_vertex = true;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float" && type != "float32") throw util::FormatError(src + ": property " + name + " is not float");
      props.push_back(name);
    } else {
      throw util::FormatError(src + ": unexpected header line \"" + line + "\"");
    }
  }
  if (!have_vertex) throw util::FormatError(src + ": no vertex element");
  if (props != ply_properties()) throw util::FormatError(src + ": vertex properties do not match the Gaussian layout");

  std::vector<float> centers(m * 3), sh(m * 3), op_raw(m), scale(m * 3), rot(m * 4);
  for (std::size_t i = 0; i < m; ++i) {
    for (int k = 0; k < 3; ++k) centers[i * 3 + k] = util::read_f32(in, "PLY vertex");
    for (int k = 0; k < 3; ++k) util::read_f32(in, "PLY vertex");
    for (int k = 0; k < 3; ++k) sh[i * 3 + k] = util::read_f32(in, "PLY vertex");
    op_raw[i] = util::read_f32(in, "PLY vertex");
    for (int k = 0; k < 3; ++k) scale[i * 3 + k] = util::read_f32(in, "PLY vertex");
    for (int k = 0; k < 4; ++k) rot[i * 4 + k] = util::read_f32(in, "PLY vertex");
  }
  using Tf = diff::Tensor<float>;
  Gaussians g;
  g.centers = Tf::from({m, 3}, std::move(centers));
  g.sh_dc = Tf::from({m, 3}, std::move(sh));
  g.opacity_raw = Tf::from({m, 1}, std::move(op_raw));
  // Same op as the decoder, so opacities come back bit-identical.
  g.opacity = diff::range_sigmoid(g.opacity_raw, 0.0f, 1.0f);
  g.scaling_raw = Tf::from({m, 3}, std::move(scale));
  g.rotation = Tf::from({m, 4}, std::move(rot));
  return g;
}

TurntableResult render_turntable(const Gaussians& g, std::size_t frames, const RunConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  if (frames < 1) throw std::invalid_argument("render_turntable: frames must be >= 1");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  diff::NoGradGuard no_grad;
  TurntableResult r;
  const auto& t = cfg.train;
  for (std::size_t f = 0; f < frames; ++f) {
    const double az = 360.0 * static_cast<double>(f) / static_cast<double>(frames);
    const auto cam = splat::orbit_camera(az, cfg.turntable_elevation, cfg.turntable_radius, t.fov_y, t.render_width,
                                         t.render_height, t.near, t.far);
    const auto t0 = Clock::now();
    r.frames.push_back(splat::render(g, cam, t.background));
    r.seconds += ms_since(t0) / 1000.0;
    r.azimuths.push_back(az);
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.ppm", f);
      splat::write_ppm(out_dir / name, t.render_width, t.render_height, r.frames.back().to_rgb8());
    }
  }
  r.fps = r.seconds > 0 ? static_cast<double>(frames) / r.seconds : 0.0;
  return r;
}

text::PromptSet load_prompts(const RunConfig& cfg) {
  if (cfg.prompts == "builtin") return text::PromptSet::builtin();
  return text::PromptSet::from_file(cfg.prompts);
}

std::vector<train::StepMetrics> run_training(const RunConfig& cfg, const std::filesystem::path& resume,
                                             std::ostream* out) {
  cfg.train.validate();
  model::Model<float> model(cfg.model);
  std::size_t first = 0;
  if (!resume.empty()) {
    if (!std::filesystem::exists(resume)) throw diff::CheckpointError("checkpoint not found: " + resume.string());
    diff::load_checkpoint(model.store(), resume);
    first = static_cast<std::size_t>(model.store().step());
  }
  const auto prompts = load_prompts(cfg);
  const auto bg = cfg.train.background;
  train::MockGuidance guidance(
      [bg](const std::string& p, std::size_t w, std::size_t h) { return train::make_procedural_target(p, w, h, bg); },
      cfg.train.guidance_weight);
  std::ofstream log;
  if (!cfg.log.empty()) {
    log.open(cfg.log, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open log file " + cfg.log);
  }
  std::vector<train::StepMetrics> trace;
  const std::size_t every = cfg.checkpoint_every ? cfg.checkpoint_every : cfg.train.max_iter;
  std::size_t it = first;
  do {
    auto chunk = cfg.train;
    chunk.max_iter = std::min(cfg.train.max_iter, (it / std::max<std::size_t>(every, 1) + 1) * every);
    const auto part = train::train(model, prompts, guidance, chunk, out, log.is_open() ? &log : nullptr, it);
    trace.insert(trace.end(), part.begin(), part.end());
    it = std::max(it, chunk.max_iter);
    diff::save_checkpoint(model.store(), cfg.checkpoint);
  } while (it < cfg.train.max_iter);
  return trace;
}

bool bitwise_equal(const Gaussians& a, const Gaussians& b) {
  auto same = [](const diff::Tensor<float>& x, const diff::Tensor<float>& y) {
    if (x.defined() != y.defined()) return false;
    if (!x.defined()) return true;
    return x.shape() == y.shape() &&
           std::memcmp(x.values().data(), y.values().data(), x.size() * sizeof(float)) == 0;
  };
  return same(a.centers, b.centers) && same(a.scaling_raw, b.scaling_raw) && same(a.rotation, b.rotation) &&
         same(a.opacity, b.opacity) && same(a.opacity_raw, b.opacity_raw) && same(a.sh_dc, b.sh_dc);
}

}  // namespace textsplat::pipeline
