#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "textsplat/diff/params.hpp"
#include "textsplat/diff/rng.hpp"
#include "textsplat/model/model.hpp"
#include "textsplat/splat/splat.hpp"
#include "textsplat/text/embedding.hpp"

namespace textsplat::train {

// Image-space guidance: grad_image returns w(t) * (predicted noise - noise)
// for an H*W*3 image, in the same layout.
class GuidanceModel {
 public:
  virtual ~GuidanceModel() = default;
  virtual double weight(double t) const = 0;
  virtual std::vector<double> grad_image(std::span<const double> image, std::size_t width, std::size_t height,
                                         const std::string& prompt_dir, double t, diff::Rng& rng) const = 0;
  // Reference image for diagnostics, when the model has one.
  virtual std::optional<std::vector<double>> target(const std::string&, std::size_t, std::size_t) const {
    return std::nullopt;
  }
};

using TargetFn = std::function<std::vector<double>(const std::string& prompt, std::size_t width, std::size_t height)>;

// Predicts noise + (x - target(prompt)), so the guidance gradient pulls the
// render toward a fixed image per prompt. View suffixes are ignored when
// looking up the target.
class MockGuidance : public GuidanceModel {
 public:
  MockGuidance(TargetFn target_fn, double weight);
  double weight(double) const override { return weight_; }
  std::vector<double> grad_image(std::span<const double> image, std::size_t width, std::size_t height,
                                 const std::string& prompt_dir, double t, diff::Rng& rng) const override;
  std::optional<std::vector<double>> target(const std::string& prompt_dir, std::size_t width,
                                            std::size_t height) const override;

 private:
  TargetFn target_fn_;
  double weight_;
};

// Flat fill over a centered disk or box on the background. The fill comes
// from the color word of the prompt (if any) tinted by the remaining tokens;
// the silhouette comes from the remaining tokens only.
std::vector<double> make_procedural_target(const std::string& prompt, std::size_t width, std::size_t height,
                                           const splat::Vec3& background = {0, 0, 0});

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Guidance gradient for one rendered image; throws NonFiniteError on NaN/inf
// and std::invalid_argument on a shape mismatch.
std::vector<double> sds_grad(std::span<const double> image, std::size_t width, std::size_t height,
                             const GuidanceModel& guidance, const std::string& prompt_dir, double t, diff::Rng& rng);

struct TrainConfig {
  std::size_t batch_prompts = 2;  // B
  std::size_t batch_cameras = 2;  // C
  diff::AdamConfig adam{};
  std::size_t max_iter = 200;
  std::uint64_t seed = 0;
  double cam_radius_min = 1.8;
  double cam_radius_max = 2.4;
  double fov_y = 49.1;
  double near = 0.01;
  double far = 100.0;
  std::size_t render_width = 64;
  std::size_t render_height = 64;
  splat::Vec3 background{0, 0, 0};
  double guidance_weight = 1.0;
  double t_min = 0.02;
  double t_max = 0.98;

  void validate() const;
};

struct StepMetrics {
  std::size_t iter = 0;
  double loss = 0;       // surrogate loss summed over the B*C images
  double mse = 0;        // mean image MSE to the guidance target, NaN without one
  double grad_norm = 0;  // global parameter gradient norm before the step
  double seconds = 0;
};

// "iter\tloss\tmse\tgradnorm\tseconds"
std::string format_metrics(const StepMetrics& m);

struct ViewRecord {
  std::size_t prompt_id;
  splat::Camera camera;
  double t;
  std::string prompt_dir;
};

// Forward and backward over B prompts x C cameras; gradients are added to the
// parameter store, nothing is updated. seconds is left at 0.
template <typename T>
StepMetrics accumulate_gradients(model::Model<T>& model, const text::PromptSet& prompts,
                                 const GuidanceModel& guidance, const TrainConfig& cfg, diff::Rng& rng,
                                 std::size_t iter, std::vector<ViewRecord>* views = nullptr);

// One optimization step: B prompts, C cameras each, one backward pass and one
// Adam update. views, when given, receives the cameras used.
template <typename T>
StepMetrics train_step(model::Model<T>& model, const text::PromptSet& prompts, const GuidanceModel& guidance,
                       const TrainConfig& cfg, diff::Rng& rng, std::size_t iter,
                       std::vector<ViewRecord>* views = nullptr);

// Runs cfg.max_iter steps, writing one metrics line per step to each stream.
template <typename T>
std::vector<StepMetrics> train(model::Model<T>& model, const text::PromptSet& prompts, const GuidanceModel& guidance,
                               const TrainConfig& cfg, std::ostream* out = nullptr, std::ostream* log = nullptr,
                               std::size_t first_iter = 0);

}  // namespace textsplat::train
