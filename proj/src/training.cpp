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

#include "plainseg/training.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "plainseg/error.hpp"

namespace plainseg {

void OptimizerConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("optimizer.base_lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("optimizer.beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("optimizer.grad_clip_norm must be >= 0");
}

void ScheduleConfig::validate() const {
  if (total_steps < 1) throw ConfigError("schedule.total_steps must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ConfigError("schedule.warmup_fraction must lie in [0, 1)");
  if (!(warmup_init_factor > 0.0 && warmup_init_factor <= 1.0))
    throw ConfigError("schedule.warmup_init_factor must lie in (0, 1]");
}

double lr_at_step(std::int64_t step, const ScheduleConfig& sched, double base_lr) {
  const double warmup = sched.warmup_fraction * static_cast<double>(sched.total_steps);
  const double s = static_cast<double>(step);
  if (s >= warmup) return base_lr;
  const double f = sched.warmup_init_factor;
  return base_lr * (f + (1.0 - f) * s / warmup);
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::int64_t t, const OptimizerConfig& cfg, double lr,
                  bool apply_decay) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double wd = apply_decay ? cfg.weight_decay : 0.0;
  const std::size_t n = param.size();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * (wd * param[i] + m_hat / (std::sqrt(v_hat) + cfg.epsilon));
  }
}

AdamState init_adam(const ParamStore& params) {
  AdamState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.var.shape());
    s.v.emplace_back(e.var.shape());
  }
  return s;
}

void adamw_step(ParamStore& params, AdamState& state, const OptimizerConfig& cfg, double lr) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size())
    throw DimensionError("adamw: moment count does not match the parameter count");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& g = entries[i].var.grad();
    if (!state.m[i].same_shape(entries[i].var.value()))
      throw DimensionError("adamw: moment shape mismatch for " + entries[i].name);
    for (double x : g.storage())
      if (!std::isfinite(x)) throw NumericError(entries[i].name, "non-finite gradient in " + entries[i].name);
  }
  ++state.t;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& g = entries[i].var.grad();
    adamw_update(entries[i].var.mutable_value().span(), g.span(), state.m[i].span(),
                 state.v[i].span(), state.t, cfg, lr, entries[i].decay);
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries())
    for (double g : e.var.grad().storage()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& e : params.entries())
      if (!e.var.grad().empty())
        for (double& g : e.var.ensure_grad().storage()) g *= f;
  }
  return norm;
}

EmaState init_ema(const ParamStore& params, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("ema decay must lie in [0, 1]");
  EmaState e;
  e.decay = decay;
  for (const auto& p : params.entries()) e.shadow.push_back(p.var.value());
  return e;
}

void ema_update(std::span<double> shadow, std::span<const double> param, double decay) {
  if (shadow.size() != param.size()) throw DimensionError("ema: size mismatch");
  for (std::size_t i = 0; i < shadow.size(); ++i)
    shadow[i] = decay * shadow[i] + (1.0 - decay) * param[i];
}

void ema_update(EmaState& ema, const ParamStore& params) {
  const auto& entries = params.entries();
  if (ema.shadow.size() != entries.size()) throw DimensionError("ema: parameter count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!ema.shadow[i].same_shape(entries[i].var.value()))
      throw DimensionError("ema: shape mismatch for " + entries[i].name);
    ema_update(ema.shadow[i].span(), entries[i].var.value().span(), ema.decay);
  }
}

ParamStore ema_params(const EmaState& ema, const ParamStore& params) {
  const auto& entries = params.entries();
  if (ema.shadow.size() != entries.size()) throw DimensionError("ema: parameter count mismatch");
  ParamStore out;
  for (std::size_t i = 0; i < entries.size(); ++i) out.add(entries[i].name, ema.shadow[i], entries[i].decay);
  return out;
}

TrainState init_train_state(const ModelConfig& model, double ema_decay, std::uint64_t seed,
                            std::string config_json) {
  TrainState s;
  s.seed = seed;
  s.params = build_model_params(model);
  s.adam = init_adam(s.params);
  s.ema = init_ema(s.params, ema_decay);
  s.rng.seed(derive_seed(seed, 0x7261696eULL));
  s.config_json = std::move(config_json);
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'L', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  put_string(os, name);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
  for (int d : t.shape()) put<std::int32_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint: " + path);
  return v;
}

std::string get_string(std::istream& is, const std::string& path) {
  const auto n = get<std::uint64_t>(is, path);
  if (n > (1ULL << 32)) throw IoError("corrupt checkpoint string length: " + path);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("truncated checkpoint: " + path);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    put<std::int64_t>(os, state.step);
    put<std::uint64_t>(os, state.seed);
    put<std::int64_t>(os, state.adam.t);
    put<double>(os, state.ema.decay);
    put_string(os, state.config_json);
    std::ostringstream rs;
    rs << state.rng;
    put_string(os, rs.str());
    const auto& entries = state.params.entries();
    put<std::uint64_t>(os, entries.size() * 4);
    for (std::size_t i = 0; i < entries.size(); ++i) put_tensor(os, "param/" + entries[i].name, entries[i].var.value());
    for (std::size_t i = 0; i < entries.size(); ++i) put_tensor(os, "adam_m/" + entries[i].name, state.adam.m.at(i));
    for (std::size_t i = 0; i < entries.size(); ++i) put_tensor(os, "adam_v/" + entries[i].name, state.adam.v.at(i));
    for (std::size_t i = 0; i < entries.size(); ++i) put_tensor(os, "ema/" + entries[i].name, state.ema.shadow.at(i));
    if (!os) throw IoError("failed writing checkpoint: " + path);
  }
  fs::rename(tmp, target);
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("checkpoint has no tensor " + name);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file: " + path);
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.step = get<std::int64_t>(is, path);
  c.seed = get<std::uint64_t>(is, path);
  c.adam_t = get<std::int64_t>(is, path);
  c.ema_decay = get<double>(is, path);
  c.config_json = get_string(is, path);
  c.rng_state = get_string(is, path);
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = get_string(is, path);
    const auto nd = get<std::uint32_t>(is, path);
    if (nd > 8) throw DataError("corrupt tensor rank in checkpoint: " + name);
    Shape shape(nd);
    for (auto& d : shape) {
      d = get<std::int32_t>(is, path);
      if (d < 0) throw DataError("corrupt tensor shape in checkpoint: " + name);
    }
    Tensor t(shape);
    if (t.numel() && !is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double))))
      throw IoError("truncated checkpoint: " + path);
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, TrainState& state) {
  auto& entries = state.params.entries();
  if (ckpt.tensors.size() != entries.size() * 4)
    throw DataError("checkpoint tensor count does not match the model");
  auto copy = [](const Tensor& src, Tensor& dst, const std::string& name) {
    if (!src.same_shape(dst))
      throw DimensionError("checkpoint shape mismatch for " + name + ": " + shape_str(src.shape()) +
                           " vs " + shape_str(dst.shape()));
    dst = src;
  };
  state.adam.m.resize(entries.size());
  state.adam.v.resize(entries.size());
  state.ema.shadow.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string& n = entries[i].name;
    copy(ckpt.tensor("param/" + n), entries[i].var.mutable_value(), n);
    state.adam.m[i] = Tensor(entries[i].var.shape());
    state.adam.v[i] = Tensor(entries[i].var.shape());
    state.ema.shadow[i] = Tensor(entries[i].var.shape());
    copy(ckpt.tensor("adam_m/" + n), state.adam.m[i], n);
    copy(ckpt.tensor("adam_v/" + n), state.adam.v[i], n);
    copy(ckpt.tensor("ema/" + n), state.ema.shadow[i], n);
  }
  state.step = ckpt.step;
  state.seed = ckpt.seed;
  state.adam.t = ckpt.adam_t;
  state.ema.decay = ckpt.ema_decay;
  state.config_json = ckpt.config_json;
  std::istringstream rs(ckpt.rng_state);
  rs >> state.rng;
  if (!rs) throw DataError("corrupt rng state in checkpoint");
}

// ---------------------------------------------------------------------------
// Loop

std::vector<int> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, int n) {
  if (n < 1) throw DataError("training set is empty");
  std::vector<int> out;
  std::int64_t cached_epoch = -1;
  std::vector<int> perm(n);
  for (int b = 0; b < batch_size; ++b) {
    const std::int64_t g = step * batch_size + b;
    const std::int64_t epoch = g / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch)));
      for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[uniform_int(rng, 0, i)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[g % n]);
  }
  return out;
}

std::string metrics_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["lr"] = m.lr;
  for (const auto& [k, v] : m.losses) j[k] = v;
  return j.dump();
}

void train_loop(TrainState& state, const TrainingData& data, const ModelConfig& model,
                const AugmentConfig& augment, const OptimizerConfig& opt,
                const ScheduleConfig& sched, const LoopOptions& options) {
  model.validate();
  augment.validate();
  opt.validate();
  sched.validate();
  if (augment.crop_size != model.backbone.img_size)
    throw ConfigError("augment.crop_size must equal backbone.img_size");
  if (data.images.size() != data.manifest.images.size())
    throw DataError("training images do not match the manifest");
  const int n = static_cast<int>(data.images.size());
  const CategoryMap cats = make_category_map(data.manifest.categories);
  std::map<std::int64_t, std::vector<InstanceAnnotation>> anns;
  for (const auto& a : data.manifest.annotations) anns[a.image_id].push_back(a);

  while (state.step < options.end_step) {
    const std::int64_t s = state.step;
    const std::uint64_t step_seed = state.rng();
    const double lr = lr_at_step(s, sched, opt.base_lr);
    const std::vector<int> idx = batch_indices(state.seed, s, opt.batch_size, n);
    StepMetrics metrics{s, lr, {}};
    state.params.zero_grad();
    try {
      for (int b = 0; b < opt.batch_size; ++b) {
        const ImageInfo& info = data.manifest.images[idx[b]];
        const auto it = anns.find(info.id);
        const std::vector<InstanceAnnotation> none;
        const AugmentedSample sample = augment_image(data.images[idx[b]], info.id,
                                                     it == anns.end() ? none : it->second, augment,
                                                     derive_seed(step_seed, b));
        const GroundTruth gt = ground_truth_from(sample.annotations, cats);
        Rng rng(derive_seed(step_seed, b, 1));
        ImagePlan plan;
        const LossTerms losses = model_losses(state.params, model, sample.image, gt, rng, plan, false);
        ag::backward(ag::scale(losses.total, 1.0 / opt.batch_size));
        for (const auto& [k, v] : losses.values()) metrics.losses[k] += v / opt.batch_size;
      }
      if (opt.grad_clip_norm > 0.0) clip_grad_norm(state.params, opt.grad_clip_norm);
      adamw_step(state.params, state.adam, opt, lr);
    } catch (const NumericError& e) {
      throw NumericError(e.quantity(), "step " + std::to_string(s) + ": " + e.what());
    }
    ema_update(state.ema, state.params);
    ++state.step;
    state.params.zero_grad();

    if (options.log) *options.log << metrics_json_line(metrics) << '\n' << std::flush;
    if (options.on_step) options.on_step(metrics);
    if (options.checkpoint_every > 0 && state.step % options.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%07lld.bin", static_cast<long long>(state.step));
      const std::filesystem::path dir(options.checkpoint_dir.empty() ? "." : options.checkpoint_dir);
      save_checkpoint((dir / name).string(), state);
      save_checkpoint((dir / "last.bin").string(), state);
    }
  }
}

}  // namespace plainseg
