#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

#include "textsplat/diff/checkpoint.hpp"
#include "textsplat/pipeline/pipeline.hpp"

using namespace textsplat;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  bool json = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--set", c.overrides, "override a config key, key=value (repeatable)");
  cmd->add_flag("--json", c.json, "print the report as JSON");
}

pipeline::RunConfig effective(const Common& c) {
  auto cfg = c.config.empty() ? pipeline::RunConfig{} : pipeline::load_config(c.config);
  pipeline::apply_overrides(cfg, c.overrides);
  return cfg;
}

void report(const Common& c, const nlohmann::json& j) {
  if (c.json) {
    std::cout << j.dump() << "\n";
    return;
  }
  for (const auto& [k, v] : j.items()) std::cout << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
}

std::string numbered(const std::string& stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem.c_str(), i, ext);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-conditioned 3D Gaussian generator: train, generate, render, export."};
  app.require_subcommand(1);

  Common tr_c, gen_c, ren_c, int_c, exp_c, chk_c;
  std::string resume, prompt, checkpoint, out, ply, prompt_a, prompt_b, prompts, embeddings;
  std::size_t frames = 8, steps = 5;
  bool show_config = false;

  auto* tr = app.add_subcommand("train", "train with procedural mock guidance");
  add_common(tr, tr_c);
  tr->add_option("--resume", resume, "checkpoint to continue from");
  tr->add_flag("--print-config", show_config, "print the effective config and exit");

  auto* gen = app.add_subcommand("generate", "generate Gaussians for a prompt and write a PLY");
  add_common(gen, gen_c);
  gen->add_option("--prompt", prompt, "text prompt")->required();
  gen->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  gen->add_option("--out", out, "output PLY path")->required();

  auto* ren = app.add_subcommand("render", "render a turntable of a PLY");
  add_common(ren, ren_c);
  ren->add_option("--ply", ply, "Gaussian PLY")->required()->check(CLI::ExistingFile);
  ren->add_option("--frames", frames, "number of views")->check(CLI::PositiveNumber);
  ren->add_option("--out", out, "output directory for frame_NNN.ppm")->required();

  auto* itp = app.add_subcommand("interpolate", "blend two prompts and write one PLY per step");
  add_common(itp, int_c);
  itp->add_option("--a", prompt_a, "first prompt")->required();
  itp->add_option("--b", prompt_b, "second prompt")->required();
  itp->add_option("--steps", steps, "number of blend steps (>= 2)")->check(CLI::Range(2, 100000));
  itp->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  itp->add_option("--out", out, "output directory")->required();

  auto* exp = app.add_subcommand("export", "write one PLY per prompt of a prompt set");
  add_common(exp, exp_c);
  exp->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  exp->add_option("--prompts", prompts, "builtin or a prompt file")->default_val("builtin");
  exp->add_option("--out", out, "output directory")->required();
  exp->add_option("--embeddings", embeddings, "also write the prompt embeddings container here");

  auto* chk = app.add_subcommand("check", "run the invariant suite on freshly initialized modules");
  add_common(chk, chk_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*tr) {
      auto cfg = effective(tr_c);
      if (show_config) {
        std::cout << pipeline::serialize_config(cfg);
        return 0;
      }
      const auto trace = pipeline::run_training(cfg, resume, &std::cout);
      double secs = 0;
      for (const auto& m : trace) secs += m.seconds;
      std::cerr << "trained " << trace.size() << " steps in " << secs << " s, checkpoint " << cfg.checkpoint << "\n";
    } else if (*gen) {
      const auto cfg = effective(gen_c);
      pipeline::Generator g(cfg, checkpoint);
      const auto r = g.generate(prompt);
      pipeline::export_ply(r.parts.gaussians, out);
      report(gen_c, {{"prompt", prompt},
                     {"gaussians", r.parts.gaussians.count()},
                     {"latency_ms", r.latency_ms},
                     {"out", out}});
    } else if (*ren) {
      const auto cfg = effective(ren_c);
      const auto g = pipeline::import_ply(ply);
      const auto r = pipeline::render_turntable(g, frames, cfg, out);
      report(ren_c, {{"frames", frames},
                     {"width", cfg.train.render_width},
                     {"height", cfg.train.render_height},
                     {"seconds", r.seconds},
                     {"fps", r.fps},
                     {"out", out}});
    } else if (*itp) {
      const auto cfg = effective(int_c);
      pipeline::Generator g(cfg, checkpoint);
      std::filesystem::create_directories(out);
      const auto seq = g.interpolate(prompt_a, prompt_b, steps);
      for (std::size_t i = 0; i < seq.size(); ++i) pipeline::export_ply(seq[i], std::filesystem::path(out) / numbered("interp", i, "ply"));
      report(int_c, {{"steps", steps}, {"out", out}});
    } else if (*exp) {
      auto cfg = effective(exp_c);
      cfg.prompts = prompts;
      pipeline::Generator g(cfg, checkpoint);
      const auto set = pipeline::load_prompts(cfg);
      std::filesystem::create_directories(out);
      std::map<std::uint32_t, text::TextEmbedding> embs;
      double total_ms = 0;
      for (std::size_t i = 0; i < set.size(); ++i) {
        const auto r = g.generate(set[i]);
        total_ms += r.latency_ms;
        pipeline::export_ply(r.parts.gaussians, std::filesystem::path(out) / numbered("prompt", i, "ply"));
        embs[static_cast<std::uint32_t>(i)] = g.model().embed(set[i]);
      }
      if (!embeddings.empty()) text::export_embeddings(embeddings, embs);
      report(exp_c, {{"prompts", set.size()},
                     {"mean_latency_ms", set.size() ? total_ms / set.size() : 0.0},
                     {"out", out}});
    } else if (*chk) {
      const auto results = pipeline::run_checks(effective(chk_c));
      bool ok = true;
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : results) {
        ok = ok && r.passed;
        if (chk_c.json) {
          j.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
        } else {
          std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << (r.detail.empty() ? "" : "  (" + r.detail + ")")
                    << "\n";
        }
      }
      if (chk_c.json) std::cout << j.dump() << "\n";
      return ok ? 0 : 1;
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
