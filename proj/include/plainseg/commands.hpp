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

// The command-line workflows as library calls: dataset generation, training,
// evaluation, single-image inference, augmentation previews and statistics.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "plainseg/config.hpp"

namespace plainseg {

enum class WeightChoice { kEma, kRaw };
const char* weight_choice_name(WeightChoice w);
WeightChoice parse_weight_choice(const std::string& s);

// Writes the snapshot of `cfg` as <dir>/config.json.
void write_config_snapshot(const RunConfig& cfg, const std::string& dir);

// Generates the synthetic dataset into out_dir (images/, annotations.json,
// config.json).
ToyDataset cmd_generate_data(const RunConfig& cfg, const std::string& out_dir);

// Reads <dir>/annotations.json and every referenced PNG.
TrainingData load_dataset(const std::string& dir);

struct TrainOptions {
  std::string data_dir;
  std::optional<std::string> resume;  // checkpoint path
  std::optional<std::int64_t> steps;  // overrides schedule.total_steps as the end step
};

// Trains into cfg.out_dir: config.json, metrics.jsonl (appended on resume),
// checkpoints/ckpt_NNNNNNN.bin, checkpoints/last.bin and final.bin. On
// resume the run configuration comes from the checkpoint.
TrainState cmd_train(const RunConfig& cfg, const TrainOptions& opts, std::ostream& console);

struct LoadedModel {
  RunConfig config;
  ParamStore params;
};

// Parameters (raw or EMA shadow) and the run configuration stored in a checkpoint.
LoadedModel load_model(const std::string& checkpoint, WeightChoice weights);

struct EvalOutputs {
  EvalReport report;
  std::string detections_path;
  std::string report_json_path;
  std::string report_text_path;
};

// Inference over the dataset then evaluation. Files are suffixed with the
// weight choice: detections_ema.json, report_ema.json, report_ema.txt.
EvalOutputs cmd_eval(const std::string& checkpoint, const std::string& data_dir,
                     WeightChoice weights, const std::string& out_dir, std::ostream& console);

// Evaluates an existing COCO results file; outputs use `tag` as the suffix.
EvalOutputs cmd_eval_detections(const std::string& detections_path, const std::string& data_dir,
                                const EvalConfig& cfg, const std::string& out_dir,
                                const std::string& tag, std::ostream& console);

struct InferOutputs {
  std::vector<DetectionResult> detections;
  std::string overlay_path;
  std::string detections_path;
};

// Runs the model on one PNG and writes overlay.png plus detections.json
// (COCO results with image_id 0 and the toy category ids).
InferOutputs cmd_infer(const LoadedModel& model, const std::string& image_path,
                       const std::string& out_dir);

std::vector<PreviewRecord> cmd_augment_preview(const RunConfig& cfg, const std::string& data_dir,
                                               int n, const std::string& out_dir);

// Prints per-category counts and the rare fraction; returns the stats JSON.
std::string cmd_stats(const std::string& data_dir, std::ostream& console);

}  // namespace plainseg
