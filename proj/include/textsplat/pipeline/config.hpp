#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "textsplat/model/model.hpp"
#include "textsplat/train/train.hpp"

namespace textsplat::pipeline {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  std::string prompts = "builtin";  // "builtin" or a prompt file
  std::string checkpoint = "textsplat.ckpt";
  std::string log;                   // metrics log file, empty for none
  std::size_t checkpoint_every = 0;  // 0 writes only at the end
  double turntable_elevation = 20.0;
  double turntable_radius = 2.2;
};

struct ConfigKey {
  std::string name;
  std::string doc;
  std::string default_value;
};

// Every accepted key in file order, with its default.
const std::vector<ConfigKey>& config_keys();

// Flat "key = value" lines; '#' starts a comment. Unknown keys, malformed
// values and duplicate keys throw ConfigError naming the source and line.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

void set_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_value(const RunConfig& cfg, std::string_view key);
// Each override is "key=value".
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// Every key, including defaults, with a doc comment above each line.
std::string serialize_config(const RunConfig& cfg);

}  // namespace textsplat::pipeline
