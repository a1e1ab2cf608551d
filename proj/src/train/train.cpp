#include "textsplat/train/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

namespace textsplat::train {

namespace {

const std::map<std::string, splat::Vec3>& color_words() {
  static const std::map<std::string, splat::Vec3> table{
      {"red", {0.9, 0.1, 0.1}},    {"green", {0.1, 0.8, 0.2}},  {"blue", {0.15, 0.25, 0.9}},
      {"yellow", {0.95, 0.85, 0.1}}, {"orange", {0.95, 0.5, 0.1}}, {"purple", {0.55, 0.2, 0.75}},
      {"pink", {0.95, 0.5, 0.7}},  {"white", {0.95, 0.95, 0.95}}, {"black", {0.08, 0.08, 0.08}},
      {"brown", {0.5, 0.3, 0.15}}, {"gray", {0.5, 0.5, 0.5}},     {"grey", {0.5, 0.5, 0.5}},
      {"silver", {0.75, 0.75, 0.78}}, {"gold", {0.85, 0.7, 0.2}}};
  return table;
}

double unit_from(std::uint64_t h) { return static_cast<double>(diff::splitmix64(h) >> 11) * 0x1.0p-53; }

}  // namespace

MockGuidance::MockGuidance(TargetFn target_fn, double weight) : target_fn_(std::move(target_fn)), weight_(weight) {}

std::vector<double> MockGuidance::grad_image(std::span<const double> image, std::size_t width, std::size_t height,
                                             const std::string& prompt_dir, double t, diff::Rng& rng) const {
  const auto tgt = target_fn_(text::strip_direction(prompt_dir), width, height);
  if (tgt.size() != image.size()) throw std::invalid_argument("MockGuidance: target size does not match the image");
  const double w = weight(t);
  std::vector<double> g(image.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double noise = rng.normal();
    const double predicted = noise + (image[i] - tgt[i]);
    g[i] = w * (predicted - noise);
  }
  return g;
}

std::optional<std::vector<double>> MockGuidance::target(const std::string& prompt_dir, std::size_t width,
                                                        std::size_t height) const {
  return target_fn_(text::strip_direction(prompt_dir), width, height);
}

std::vector<double> make_procedural_target(const std::string& prompt, std::size_t width, std::size_t height,
                                           const splat::Vec3& background) {
  const auto& colors = color_words();
  std::optional<splat::Vec3> base;
  std::uint64_t shape_hash = 0x5eed;
  for (const auto& tok : text::tokenize(prompt)) {
    auto it = colors.find(tok);
    if (it != colors.end()) {
      if (!base) base = it->second;
    } else {
      shape_hash = diff::hash_string(tok, shape_hash);
    }
  }
  splat::Vec3 tint{unit_from(shape_hash + 1), unit_from(shape_hash + 2), unit_from(shape_hash + 3)};
  splat::Vec3 fill{};
  for (int k = 0; k < 3; ++k) fill[k] = base ? 0.8 * (*base)[k] + 0.2 * tint[k] : tint[k];

  const bool disk = (diff::splitmix64(shape_hash) & 1u) == 0;
  const double half = 0.5 * static_cast<double>(std::min(width, height));
  const double size = half * (0.55 + 0.25 * unit_from(shape_hash + 4));
  const double cx = 0.5 * static_cast<double>(width), cy = 0.5 * static_cast<double>(height);
  std::vector<double> img(width * height * 3);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const bool inside = disk ? dx * dx + dy * dy <= size * size
                               : std::max(std::abs(dx), std::abs(dy)) <= 0.85 * size;
      for (int k = 0; k < 3; ++k) img[(y * width + x) * 3 + k] = inside ? fill[k] : background[k];
    }
  return img;
}

std::vector<double> sds_grad(std::span<const double> image, std::size_t width, std::size_t height,
                             const GuidanceModel& guidance, const std::string& prompt_dir, double t, diff::Rng& rng) {
  if (image.size() != width * height * 3) throw std::invalid_argument("sds_grad: image is not H*W*3");
  auto g = guidance.grad_image(image, width, height, prompt_dir, t, rng);
  if (g.size() != image.size()) throw std::invalid_argument("sds_grad: guidance returned a gradient of wrong size");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NonFiniteError("sds_grad: non-finite guidance gradient at element " + std::to_string(i) +
                           " for prompt \"" + prompt_dir + "\"");
    }
  }
  return g;
}

void TrainConfig::validate() const {
  if (batch_prompts < 1 || batch_cameras < 1) throw std::invalid_argument("train: batch sizes must be >= 1");
  if (!(t_min <= t_max)) throw std::invalid_argument("train: t_min must not exceed t_max");
  if (!(cam_radius_min > 0.0 && cam_radius_min <= cam_radius_max)) {
    throw std::invalid_argument("train: need 0 < cam_radius_min <= cam_radius_max");
  }
  if (!(adam.lr >= 0.0)) throw std::invalid_argument("train: learning rate must be non-negative");
}

std::string format_metrics(const StepMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%.6f", m.iter, m.loss, m.mse, m.grad_norm, m.seconds);
  return buf;
}

template <typename T>
StepMetrics accumulate_gradients(model::Model<T>& model, const text::PromptSet& prompts,
                                 const GuidanceModel& guidance, const TrainConfig& cfg, diff::Rng& rng,
                                 std::size_t iter, std::vector<ViewRecord>* views) {
  cfg.validate();
  if (prompts.size() == 0) throw std::invalid_argument("train: empty prompt set");
  const std::size_t n = prompts.size();

  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<std::size_t> batch;
  if (cfg.batch_prompts >= n) {
    batch = ids;
  } else {
    for (std::size_t i = 0; i < cfg.batch_prompts; ++i) {
      std::swap(ids[i], ids[i + rng.index(n - i)]);
      batch.push_back(ids[i]);
    }
  }
  if (views) views->clear();

  const std::size_t w = cfg.render_width, h = cfg.render_height;
  diff::Tensor<T> total;
  double mse_sum = 0.0;
  std::size_t mse_count = 0;
  for (std::size_t pid : batch) {
    const std::string& prompt = prompts[pid];
    const auto out = model.forward(prompt);
    for (std::size_t c = 0; c < cfg.batch_cameras; ++c) {
      const auto cam = splat::sample_camera(rng, cfg.cam_radius_min, cfg.cam_radius_max, cfg.fov_y, w, h, cfg.near,
                                            cfg.far);
      const std::string prompt_dir = text::augment_direction(prompt, cam.azimuth_deg);
      const auto img = splat::render(out.gaussians, cam, cfg.background);
      const std::vector<double> x(img.pixels.values().begin(), img.pixels.values().end());
      const double t = rng.uniform(cfg.t_min, cfg.t_max);
      if (views) views->push_back({pid, cam, t, prompt_dir});
      const auto g = sds_grad(x, w, h, guidance, prompt_dir, t, rng);
      const std::vector<T> gt(g.begin(), g.end());
      auto term = diff::dot_const(img.pixels, std::span<const T>(gt));
      if (!std::isfinite(static_cast<double>(term.item()))) {
        throw NonFiniteError("train_step: non-finite loss for prompt \"" + prompt + "\" camera azimuth " +
                             std::to_string(cam.azimuth_deg) + " elevation " + std::to_string(cam.elevation_deg));
      }
      total = total.defined() ? diff::add(total, term) : term;
      if (auto tgt = guidance.target(prompt_dir, w, h)) {
        double s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - (*tgt)[i]) * (x[i] - (*tgt)[i]);
        mse_sum += s / static_cast<double>(x.size());
        ++mse_count;
      }
    }
  }

  StepMetrics m;
  m.iter = iter;
  m.loss = static_cast<double>(total.item());
  m.mse = mse_count ? mse_sum / static_cast<double>(mse_count) : std::numeric_limits<double>::quiet_NaN();
  total.backward();
  m.grad_norm = model.store().grad_norm();
  if (!std::isfinite(m.grad_norm)) throw NonFiniteError("train_step: non-finite gradient norm");
  return m;
}

template <typename T>
StepMetrics train_step(model::Model<T>& model, const text::PromptSet& prompts, const GuidanceModel& guidance,
                       const TrainConfig& cfg, diff::Rng& rng, std::size_t iter, std::vector<ViewRecord>* views) {
  const auto start = std::chrono::steady_clock::now();
  model.store().zero_grad();
  auto m = accumulate_gradients(model, prompts, guidance, cfg, rng, iter, views);
  diff::adam_step(model.store(), cfg.adam);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

template <typename T>
std::vector<StepMetrics> train(model::Model<T>& model, const text::PromptSet& prompts, const GuidanceModel& guidance,
                               const TrainConfig& cfg, std::ostream* out, std::ostream* log, std::size_t first_iter) {
  const std::uint64_t base = diff::mix_seed(cfg.seed, "train");
  std::vector<StepMetrics> trace;
  for (std::size_t it = first_iter; it < cfg.max_iter; ++it) {
    // Per-iteration streams keep a resumed run on the same samples.
    diff::Rng rng(diff::splitmix64(base + it));
    trace.push_back(train_step(model, prompts, guidance, cfg, rng, it));
    const auto line = format_metrics(trace.back());
    if (out) *out << line << '\n' << std::flush;
    if (log) *log << line << '\n' << std::flush;
  }
  return trace;
}

template StepMetrics accumulate_gradients(model::Model<float>&, const text::PromptSet&, const GuidanceModel&,
                                          const TrainConfig&, diff::Rng&, std::size_t, std::vector<ViewRecord>*);
template StepMetrics accumulate_gradients(model::Model<double>&, const text::PromptSet&, const GuidanceModel&,
                                          const TrainConfig&, diff::Rng&, std::size_t, std::vector<ViewRecord>*);
template StepMetrics train_step(model::Model<float>&, const text::PromptSet&, const GuidanceModel&,
                                const TrainConfig&, diff::Rng&, std::size_t, std::vector<ViewRecord>*);
template StepMetrics train_step(model::Model<double>&, const text::PromptSet&, const GuidanceModel&,
                                const TrainConfig&, diff::Rng&, std::size_t, std::vector<ViewRecord>*);
template std::vector<StepMetrics> train(model::Model<float>&, const text::PromptSet&, const GuidanceModel&,
                                        const TrainConfig&, std::ostream*, std::ostream*, std::size_t);
template std::vector<StepMetrics> train(model::Model<double>&, const text::PromptSet&, const GuidanceModel&,
                                        const TrainConfig&, std::ostream*, std::ostream*, std::size_t);

}  // namespace textsplat::train
