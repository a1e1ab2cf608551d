#include "textsplat/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace textsplat::pipeline {

namespace {

struct Field {
  std::string name;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("expected a number, got \"" + std::string(s) + "\"");
  return v;
}

template <typename U>
U parse_uint(std::string_view s) {
  U v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got \"" + std::string(s) + "\"");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got \"" + std::string(s) + "\"");
}

splat::Vec3 parse_vec3(std::string_view s) {
  splat::Vec3 v{};
  for (int k = 0; k < 3; ++k) {
    const auto comma = s.find(',');
    if ((k < 2) != (comma != std::string_view::npos)) throw ConfigError("expected r,g,b, got \"" + std::string(s) + "\"");
    v[k] = parse_double(trim(s.substr(0, comma)));
    if (k < 2) s = s.substr(comma + 1);
  }
  return v;
}

#define DOUBLE_FIELD(key, member, text)                                                              \
  Field {                                                                                            \
    key, text, [](const RunConfig& c) { return fmt_double(c.member); },                              \
        [](RunConfig& c, std::string_view v) { c.member = parse_double(v); }                        \
  }
#define SIZE_FIELD(key, member, text)                                                                \
  Field {                                                                                            \
    key, text, [](const RunConfig& c) { return std::to_string(c.member); },                          \
        [](RunConfig& c, std::string_view v) { c.member = parse_uint<std::size_t>(v); }             \
  }
#define U64_FIELD(key, member, text)                                                                 \
  Field {                                                                                            \
    key, text, [](const RunConfig& c) { return std::to_string(c.member); },                          \
        [](RunConfig& c, std::string_view v) { c.member = parse_uint<std::uint64_t>(v); }           \
  }
#define STRING_FIELD(key, member, text)                                                              \
  Field {                                                                                            \
    key, text, [](const RunConfig& c) { return c.member; },                                          \
        [](RunConfig& c, std::string_view v) { c.member = std::string(v); }                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      U64_FIELD("seed", model.seed, "parameter initialization seed"),
      U64_FIELD("embed.seed", model.embed_seed, "token embedding table seed"),
      U64_FIELD("train.seed", train.seed, "prompt/camera/timestep sampling seed"),
      SIZE_FIELD("grid.n_side", model.grid_n, "anchors per axis; n_side^3 Gaussians"),
      DOUBLE_FIELD("grid.extent", model.grid_extent, "anchor lattice half-width"),
      DOUBLE_FIELD("tsd.max_offset", model.max_offset, "maximum offset per axis"),
      SIZE_FIELD("tsd.blocks", model.tsd_blocks, "cross-attention + FFN blocks"),
      SIZE_FIELD("tsd.freqs", model.tsd_freqs, "sinusoidal frequencies per axis"),
      SIZE_FIELD("embed.length", model.embed_len, "tokens per prompt embedding"),
      SIZE_FIELD("embed.dim", model.embed_dim, "embedding width"),
      SIZE_FIELD("model.dim", model.model_dim, "attention width of the deformation network"),
      SIZE_FIELD("model.heads", model.attn_heads, "attention heads"),
      SIZE_FIELD("model.ffn_mult", model.ffn_mult, "feed-forward expansion"),
      SIZE_FIELD("triplane.channels", model.triplane_channels, "feature channels per plane"),
      SIZE_FIELD("triplane.base_res", model.triplane_base_res, "plane resolution before upsampling"),
      SIZE_FIELD("triplane.upsamples", model.triplane_upsamples, "2x upsampling stages"),
      SIZE_FIELD("triplane.width", model.ttg_width, "generator feature width"),
      Field{"triplane.mode", "separate (one generator per plane) or single (shared, channel split)",
            [](const RunConfig& c) {
              return std::string(c.model.ttg_mode == ttg::TtgMode::separate ? "separate" : "single");
            },
            [](RunConfig& c, std::string_view v) {
              if (v == "separate") {
                c.model.ttg_mode = ttg::TtgMode::separate;
              } else if (v == "single") {
                c.model.ttg_mode = ttg::TtgMode::single;
              } else {
                throw ConfigError("expected separate or single, got \"" + std::string(v) + "\"");
              }
            }},
      SIZE_FIELD("decoder.hidden", model.decoder_hidden, "decoder MLP hidden width"),
      Field{"decoder.coords", "feed Gaussian centers to the decoder MLPs",
            [](const RunConfig& c) { return std::string(c.model.decoder_coords ? "true" : "false"); },
            [](RunConfig& c, std::string_view v) { c.model.decoder_coords = parse_bool(v); }},
      DOUBLE_FIELD("scale.min", model.scale_min, "lower bound of log scale"),
      DOUBLE_FIELD("scale.max", model.scale_max, "upper bound of log scale"),
      SIZE_FIELD("train.batch_prompts", train.batch_prompts, "prompts per step"),
      SIZE_FIELD("train.batch_cameras", train.batch_cameras, "cameras per prompt"),
      DOUBLE_FIELD("train.lr", train.adam.lr, "Adam learning rate"),
      DOUBLE_FIELD("train.beta1", train.adam.beta1, "Adam first-moment decay"),
      DOUBLE_FIELD("train.beta2", train.adam.beta2, "Adam second-moment decay"),
      DOUBLE_FIELD("train.eps", train.adam.eps, "Adam epsilon"),
      SIZE_FIELD("train.max_iter", train.max_iter, "optimization steps"),
      SIZE_FIELD("train.checkpoint_every", checkpoint_every, "steps between checkpoints; 0 for end only"),
      STRING_FIELD("train.prompts", prompts, "builtin or a prompt file, one per line"),
      STRING_FIELD("train.checkpoint", checkpoint, "checkpoint path"),
      STRING_FIELD("train.log", log, "metrics log file; empty for none"),
      DOUBLE_FIELD("guidance.weight", train.guidance_weight, "guidance weight w"),
      DOUBLE_FIELD("guidance.t_min", train.t_min, "lowest sampled timestep"),
      DOUBLE_FIELD("guidance.t_max", train.t_max, "highest sampled timestep"),
      DOUBLE_FIELD("camera.radius_min", train.cam_radius_min, "closest training camera"),
      DOUBLE_FIELD("camera.radius_max", train.cam_radius_max, "farthest training camera"),
      DOUBLE_FIELD("camera.fov_y", train.fov_y, "vertical field of view, degrees"),
      DOUBLE_FIELD("camera.near", train.near, "near plane"),
      DOUBLE_FIELD("camera.far", train.far, "far plane"),
      SIZE_FIELD("render.width", train.render_width, "image width"),
      SIZE_FIELD("render.height", train.render_height, "image height"),
      Field{"render.background", "background color r,g,b",
            [](const RunConfig& c) {
              const auto& b = c.train.background;
              return fmt_double(b[0]) + "," + fmt_double(b[1]) + "," + fmt_double(b[2]);
            },
            [](RunConfig& c, std::string_view v) { c.train.background = parse_vec3(v); }},
      DOUBLE_FIELD("turntable.elevation", turntable_elevation, "turntable camera elevation, degrees"),
      DOUBLE_FIELD("turntable.radius", turntable_radius, "turntable camera distance"),
  };
  return table;
}

#undef DOUBLE_FIELD
#undef SIZE_FIELD
#undef U64_FIELD
#undef STRING_FIELD

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  throw ConfigError("unknown config key \"" + std::string(key) + "\"");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    const RunConfig defaults;
    for (const auto& f : fields()) out.push_back({f.name, f.doc, f.get(defaults)});
    return out;
  }();
  return keys;
}

void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& f = find_field(key);
  try {
    f.set(cfg, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

std::string get_value(const RunConfig& cfg, std::string_view key) { return find_field(key).get(cfg); }

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key \"" + key + "\"");
    try {
      set_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override \"" + o + "\" is not key=value");
    set_value(cfg, trim(std::string_view(o).substr(0, eq)), std::string_view(o).substr(eq + 1));
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += "# " + f.doc + "\n";
    out += f.name + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace textsplat::pipeline
