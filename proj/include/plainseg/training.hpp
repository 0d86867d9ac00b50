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

// AdamW with a linear warmup into a constant learning rate, an exponential
// moving average of the weights, binary checkpoints and the training loop.

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "plainseg/augmentation.hpp"
#include "plainseg/detector.hpp"

namespace plainseg {

struct OptimizerConfig {
  double base_lr = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.1;
  int batch_size = 32;
  double grad_clip_norm = 0.0;  // global L2 norm; 0 disables

  void validate() const;
};

struct ScheduleConfig {
  std::int64_t total_steps = 103000;
  double warmup_fraction = 0.01;
  double warmup_init_factor = 0.001;

  void validate() const;
};

// Linear ramp from warmup_init_factor * base_lr at step 0 to base_lr at step
// warmup_fraction * total_steps, constant afterwards.
double lr_at_step(std::int64_t step, const ScheduleConfig& sched, double base_lr);

// One bias-corrected AdamW update of a flat tensor; `t` is the 1-based step
// count. Decay is decoupled: p -= lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::int64_t t, const OptimizerConfig& cfg, double lr,
                  bool apply_decay);

struct AdamState {
  std::int64_t t = 0;
  std::vector<Tensor> m, v;  // parallel to ParamStore entries
};

AdamState init_adam(const ParamStore& params);

// Applies adamw_update to every parameter using its accumulated gradient
// (missing gradients count as zero). Throws NumericError naming the first
// parameter with a non-finite gradient before touching any value.
void adamw_step(ParamStore& params, AdamState& state, const OptimizerConfig& cfg, double lr);

// Scales every gradient so the global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

struct EmaState {
  double decay = 0.9999;
  std::vector<Tensor> shadow;  // parallel to ParamStore entries
};

EmaState init_ema(const ParamStore& params, double decay);
// shadow = decay * shadow + (1 - decay) * param, elementwise.
void ema_update(EmaState& ema, const ParamStore& params);
void ema_update(std::span<double> shadow, std::span<const double> param, double decay);
// A parameter store holding the shadow values.
ParamStore ema_params(const EmaState& ema, const ParamStore& params);

struct TrainState {
  std::int64_t step = 0;  // completed updates
  std::uint64_t seed = 0;
  ParamStore params;
  AdamState adam;
  EmaState ema;
  Rng rng;
  std::string config_json;
};

TrainState init_train_state(const ModelConfig& model, double ema_decay, std::uint64_t seed,
                            std::string config_json);

// File layout: magic "PLSGCKPT", u32 version, i64 step, u64 seed, i64 adam t,
// f64 EMA decay, config JSON, rng text state, then named tensors "param/<name>",
// "adam_m/<name>", "adam_v/<name>", "ema/<name>" with their shapes.
void save_checkpoint(const std::string& path, const TrainState& state);

struct Checkpoint {
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::int64_t adam_t = 0;
  double ema_decay = 0.0;
  std::string config_json;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

Checkpoint read_checkpoint(const std::string& path);
// Copies every tensor into `state`, whose parameter set must match by name
// and shape.
void restore_checkpoint(const Checkpoint& ckpt, TrainState& state);

struct TrainingData {
  DatasetManifest manifest;
  std::vector<Image> images;  // parallel to manifest.images
};

struct StepMetrics {
  std::int64_t step = 0;  // 0-based index of the update
  double lr = 0.0;
  std::map<std::string, double> losses;  // batch means
};

std::string metrics_json_line(const StepMetrics& m);

struct LoopOptions {
  std::int64_t end_step = 0;      // run until state.step == end_step
  std::int64_t checkpoint_every = 0;  // 0: none
  std::string checkpoint_dir;
  std::ostream* log = nullptr;    // receives one JSON line per step
  std::function<void(const StepMetrics&)> on_step;
};

// Per step: draw a seed from state.rng, take batch_size images from an
// epoch-wise shuffle, augment each, sum per-image losses / batch_size,
// backpropagate, optionally clip, AdamW with lr_at_step, EMA update.
// Numeric failures are rethrown with the step number.
void train_loop(TrainState& state, const TrainingData& data, const ModelConfig& model,
                const AugmentConfig& augment, const OptimizerConfig& opt,
                const ScheduleConfig& sched, const LoopOptions& options);

// Image indices used at `step` for a dataset of n images.
std::vector<int> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, int n);

}  // namespace plainseg
