/* Copyright 2026 The plainseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Aggregate run configuration, its JSON form and the named presets.
// Precedence when resolving: command line > environment > file > preset > built-in.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plainseg/augmentation.hpp"
#include "plainseg/detector.hpp"
#include "plainseg/evaluation.hpp"
#include "plainseg/toy_dataset.hpp"
#include "plainseg/training.hpp"

namespace plainseg {

inline constexpr const char* kSeedEnvVar = "PLAINSEG_SEED";

struct RunConfig {
  std::string name = "run";
  std::string out_dir = "runs/run";
  std::uint64_t seed = 0;
  ToyDatasetConfig data;
  AugmentConfig augment{0.1, 2.0, 128, 0, 0};
  ModelConfig model;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  double ema_decay = 0.9999;
  std::int64_t checkpoint_every = 500;
  EvalConfig eval;

  // Validates every part and checks crop_size == img_size.
  void validate() const;
  // Copies `seed` into the sub-configs that carry one.
  void propagate_seed();
};

std::string config_to_json(const RunConfig& cfg);
// Overlays the keys present in `text` onto `base`. Unknown keys are
// rejected with ConfigError naming the path.
RunConfig config_from_json(const std::string& text, const RunConfig& base = {});

std::vector<std::string> preset_names();
// Throws ConfigError for an unknown name.
RunConfig preset(const std::string& name);

struct ConfigSources {
  std::optional<std::string> preset;
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;  // command line
  std::optional<std::string> out_dir;
  bool read_env = true;
};

// Built-in defaults, then preset, file, env seed and command-line values.
RunConfig resolve_config(const ConfigSources& sources);

// Parses a decimal seed, throwing ConfigError on anything else.
std::uint64_t parse_seed(const std::string& text, const std::string& origin);

}  // namespace plainseg
