#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "textsplat/model/model.hpp"
#include "textsplat/pipeline/config.hpp"
#include "textsplat/splat/splat.hpp"

namespace textsplat::pipeline {

using Gaussians = decoder::GaussianSet<float>;

struct GenerateResult {
  model::Intermediates<float> parts;  // centers, triplane, features, gaussians
  double latency_ms = 0;
};

// Inference: a model built from the config, optionally loaded from a
// checkpoint. Nothing here records a gradient graph.
class Generator {
 public:
  explicit Generator(const RunConfig& cfg);
  // Throws diff::CheckpointError if the file is missing, malformed or its
  // shapes disagree with the config.
  Generator(const RunConfig& cfg, const std::filesystem::path& checkpoint);

  const RunConfig& config() const { return cfg_; }
  model::Model<float>& model() { return model_; }
  const model::Model<float>& model() const { return model_; }

  GenerateResult generate(const std::string& prompt) const;
  GenerateResult generate(const text::TextEmbedding& embedding) const;

  // Embeddings blended at t = k/(steps-1); steps >= 2.
  std::vector<Gaussians> interpolate(const std::string& a, const std::string& b, std::size_t steps) const;

 private:
  RunConfig cfg_;
  model::Model<float> model_;
};

// Binary little-endian PLY with x,y,z, nx,ny,nz (zero), f_dc_0..2, opacity
// (logit), scale_0..2 (log), rot_0..3 (w,x,y,z), all float32.
void export_ply(const Gaussians& g, const std::filesystem::path& path);
Gaussians import_ply(const std::filesystem::path& path);

struct TurntableResult {
  std::vector<double> azimuths;
  std::vector<splat::RenderedImage<float>> frames;
  double seconds = 0;  // rendering only
  double fps = 0;
};

// Equally spaced azimuths from 0 at the configured elevation and radius.
// When out_dir is non-empty, writes frame_000.ppm, frame_001.ppm, ...
TurntableResult render_turntable(const Gaussians& g, std::size_t frames, const RunConfig& cfg,
                                 const std::filesystem::path& out_dir = {});

bool bitwise_equal(const Gaussians& a, const Gaussians& b);

text::PromptSet load_prompts(const RunConfig& cfg);

// Trains with procedural-target mock guidance, writing metrics to `out` and
// cfg.log, and checkpoints (with optimizer state) to cfg.checkpoint. With a
// resume checkpoint, continues from its step count.
std::vector<train::StepMetrics> run_training(const RunConfig& cfg, const std::filesystem::path& resume = {},
                                             std::ostream* out = nullptr);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Invariant suite on freshly initialized modules built from cfg.
std::vector<CheckResult> run_checks(const RunConfig& cfg);

}  // namespace textsplat::pipeline
