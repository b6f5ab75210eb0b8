#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "splatkit/densify.hpp"
#include "splatkit/losses.hpp"
#include "splatkit/rasterizer.hpp"
#include "splatkit/smoothing.hpp"
#include "splatkit/trainer.hpp"

namespace splat {

/// TOML subset sufficient for the run configs: [section] headers, scalar
/// key = value (int, float, bool, "string") and flat numeric arrays.
/// No TOML package is vendored, and the configs never need more than this.
using TomlValue = std::variant<long, double, bool, std::string, std::vector<double>>;
using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;

TomlTable parse_toml(const std::string& text, const std::string& origin = "<string>");
TomlTable parse_toml_file(const std::string& path);

/// Everything a training run needs, with every field reachable from the
/// config file. Unknown keys are an error.
struct RunConfig {
  TrainConfig train;
  LossWeights weights;
  MaskConfig mask;
  SmoothingConfig smoothing;
  DensityConfig density;
  RenderSettings render;
  std::string denoiser = "perfect";
  bool densify_init = true;  // run point-cloud densification before training
};

RunConfig load_run_config(const TomlTable& table);
RunConfig load_run_config_file(const std::string& path);

}  // namespace splat
