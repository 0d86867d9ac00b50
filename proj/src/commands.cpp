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

#include "plainseg/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "plainseg/error.hpp"

namespace plainseg {

namespace fs = std::filesystem;

const char* weight_choice_name(WeightChoice w) { return w == WeightChoice::kEma ? "ema" : "raw"; }

WeightChoice parse_weight_choice(const std::string& s) {
  if (s == "ema") return WeightChoice::kEma;
  if (s == "raw") return WeightChoice::kRaw;
  throw ConfigError("--weights must be ema or raw, got \"" + s + "\"");
}

void write_config_snapshot(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "config.json").string(), config_to_json(cfg) + "\n");
}

ToyDataset cmd_generate_data(const RunConfig& cfg, const std::string& out_dir) {
  cfg.data.validate();
  ToyDataset ds = generate_toy_dataset(cfg.data);
  write_toy_dataset(ds, out_dir);
  write_config_snapshot(cfg, out_dir);
  return ds;
}

TrainingData load_dataset(const std::string& dir) {
  const fs::path ann = fs::path(dir) / "annotations.json";
  if (!fs::exists(ann)) throw IoError("dataset has no annotations.json: " + dir);
  TrainingData d;
  d.manifest = load_coco_json(ann.string());
  validate_manifest(d.manifest);
  for (const auto& info : d.manifest.images) {
    Image img = read_png((fs::path(dir) / info.file_name).string());
    if (img.height != info.height || img.width != info.width)
      throw DataError("image " + info.file_name + " is " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + " but the manifest says " +
                      std::to_string(info.height) + "x" + std::to_string(info.width));
    d.images.push_back(std::move(img));
  }
  return d;
}

namespace {

// Keeps the log lines of steps before `step` so a resumed run continues the file.
void truncate_metrics(const fs::path& path, std::int64_t step) {
  if (!fs::exists(path)) return;
  std::ifstream is(path);
  std::string line, kept;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) continue;
    if (j["step"].get<std::int64_t>() < step) kept += line + "\n";
  }
  is.close();
  write_text_file(path.string(), kept);
}

}  // namespace

TrainState cmd_train(const RunConfig& cfg_in, const TrainOptions& opts, std::ostream& console) {
  RunConfig cfg = cfg_in;
  TrainState state;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "checkpoints");
  const fs::path log_path = out / "metrics.jsonl";
  if (opts.resume) {
    const Checkpoint ckpt = read_checkpoint(*opts.resume);
    cfg = config_from_json(ckpt.config_json);
    cfg.out_dir = cfg_in.out_dir;
    cfg.validate();
    state = init_train_state(cfg.model, cfg.ema_decay, cfg.seed, ckpt.config_json);
    restore_checkpoint(ckpt, state);
    truncate_metrics(log_path, state.step);
    console << "resumed from " << *opts.resume << " at step " << state.step << "\n";
  } else {
    cfg.validate();
    write_config_snapshot(cfg, out.string());
    state = init_train_state(cfg.model, cfg.ema_decay, cfg.seed, config_to_json(cfg));
    write_text_file(log_path.string(), "");
  }
  const TrainingData data = load_dataset(opts.data_dir);
  if (data.manifest.categories.size() != static_cast<std::size_t>(cfg.model.heads.num_classes))
    throw ConfigError("dataset has " + std::to_string(data.manifest.categories.size()) +
                      " categories but heads.num_classes is " + std::to_string(cfg.model.heads.num_classes));

  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open " + log_path.string());
  LoopOptions lo;
  lo.end_step = opts.steps.value_or(cfg.schedule.total_steps);
  lo.checkpoint_every = cfg.checkpoint_every;
  lo.checkpoint_dir = (out / "checkpoints").string();
  lo.log = &log;
  lo.on_step = [&](const StepMetrics& m) {
    if ((m.step + 1) % 10 == 0 || m.step + 1 == lo.end_step) {
      char line[128];
      std::snprintf(line, sizeof line, "step %lld/%lld  loss %.4f  lr %.3g\n",
                    static_cast<long long>(m.step + 1), static_cast<long long>(lo.end_step),
                    m.losses.at("loss_total"), m.lr);
      console << line << std::flush;
    }
  };
  train_loop(state, data, cfg.model, cfg.augment, cfg.optimizer, cfg.schedule, lo);
  save_checkpoint((out / "final.bin").string(), state);
  console << "wrote " << (out / "final.bin").string() << "\n";
  return state;
}

LoadedModel load_model(const std::string& checkpoint, WeightChoice weights) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  LoadedModel m;
  m.config = config_from_json(ckpt.config_json);
  m.config.validate();
  m.params = build_model_params(m.config.model);
  const std::string prefix = weights == WeightChoice::kEma ? "ema/" : "param/";
  for (auto& e : m.params.entries()) {
    const Tensor& t = ckpt.tensor(prefix + e.name);
    if (!t.same_shape(e.var.value())) throw DimensionError("checkpoint shape mismatch for " + e.name);
    e.var.mutable_value() = t;
  }
  return m;
}

namespace {

EvalOutputs write_eval(const std::vector<DetectionResult>& dets, const TrainingData& data,
                       const EvalConfig& cfg, const std::string& out_dir, const std::string& tag,
                       bool write_detections, std::ostream& console) {
  fs::create_directories(out_dir);
  EvalOutputs o;
  o.report = evaluate(dets, data.manifest, cfg);
  const fs::path out(out_dir);
  if (write_detections) {
    o.detections_path = (out / ("detections_" + tag + ".json")).string();
    write_text_file(o.detections_path, serialize_results_json(dets));
  }
  o.report_json_path = (out / ("report_" + tag + ".json")).string();
  o.report_text_path = (out / ("report_" + tag + ".txt")).string();
  const std::string text = render_report_text(o.report, data.manifest);
  write_text_file(o.report_json_path, report_to_json(o.report) + "\n");
  write_text_file(o.report_text_path, text);
  console << text;
  return o;
}

}  // namespace

EvalOutputs cmd_eval(const std::string& checkpoint, const std::string& data_dir, WeightChoice weights,
                     const std::string& out_dir, std::ostream& console) {
  const LoadedModel model = load_model(checkpoint, weights);
  const TrainingData data = load_dataset(data_dir);
  const auto dets = predict_dataset(model.params, model.config.model, data.manifest, data.images);
  return write_eval(dets, data, model.config.eval, out_dir, weight_choice_name(weights), true, console);
}

EvalOutputs cmd_eval_detections(const std::string& detections_path, const std::string& data_dir,
                                const EvalConfig& cfg, const std::string& out_dir,
                                const std::string& tag, std::ostream& console) {
  const TrainingData data = load_dataset(data_dir);
  const auto dets = parse_results_json(read_text_file(detections_path));
  EvalOutputs o = write_eval(dets, data, cfg, out_dir, tag, false, console);
  o.detections_path = detections_path;
  return o;
}

InferOutputs cmd_infer(const LoadedModel& model, const std::string& image_path,
                       const std::string& out_dir) {
  const Image image = read_png(image_path);
  const std::vector<Detection> dets = predict(model.params, model.config.model, image);
  CategoryMap cats = make_category_map(toy_categories());
  InferOutputs o;
  o.detections = to_results(dets, 0, cats);
  Image overlay = image;
  for (const Detection& d : dets) {
    const Rgb c = palette_color(cats.ids[d.label]);
    blend_mask(overlay, d.mask, c, 0.45);
    const BoundingBox b = to_xywh(d.box);
    draw_box(overlay, b, c);
    char label[16];
    std::snprintf(label, sizeof label, "%d", static_cast<int>(d.score * 100.0 + 0.5));
    draw_text(overlay, static_cast<int>(b.x) + 1, static_cast<int>(b.y) + 1, label, c);
  }
  fs::create_directories(out_dir);
  o.overlay_path = (fs::path(out_dir) / "overlay.png").string();
  o.detections_path = (fs::path(out_dir) / "detections.json").string();
  write_png(o.overlay_path, overlay);
  write_text_file(o.detections_path, serialize_results_json(o.detections));
  return o;
}

std::vector<PreviewRecord> cmd_augment_preview(const RunConfig& cfg, const std::string& data_dir,
                                               int n, const std::string& out_dir) {
  const fs::path ann = fs::path(data_dir) / "annotations.json";
  const DatasetManifest manifest = load_coco_json(ann.string());
  validate_manifest(manifest);
  return augment_preview(manifest, data_dir, cfg.augment, n, out_dir);
}

std::string cmd_stats(const std::string& data_dir, std::ostream& console) {
  const DatasetManifest manifest = load_coco_json((fs::path(data_dir) / "annotations.json").string());
  validate_manifest(manifest);
  const DatasetStats s = dataset_stats(manifest);
  nlohmann::ordered_json j;
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  char line[128];
  std::snprintf(line, sizeof line, "%-4s %-12s %6s %8s\n", "id", "category", "count", "share");
  console << line;
  for (const auto& c : manifest.categories) {
    const std::size_t n = s.per_category.at(c.id);
    pc[std::to_string(c.id)] = n;
    const double share = s.total ? 100.0 * static_cast<double>(n) / static_cast<double>(s.total) : 0.0;
    std::snprintf(line, sizeof line, "%-4d %-12s %6zu %7.2f%%%s\n", c.id, c.name.c_str(), n, share,
                  c.is_rare ? "  rare" : "");
    console << line;
  }
  j["per_category"] = pc;
  j["total"] = s.total;
  j["rare"] = s.rare;
  j["rare_fraction"] = s.rare_fraction ? nlohmann::ordered_json(*s.rare_fraction) : nlohmann::ordered_json(nullptr);
  console << "images " << manifest.images.size() << ", instances " << s.total << ", rare " << s.rare;
  if (s.rare_fraction) {
    std::snprintf(line, sizeof line, " (%.2f%%)", *s.rare_fraction * 100.0);
    console << line;
  }
  console << "\n";
  return j.dump(2);
}

}  // namespace plainseg
