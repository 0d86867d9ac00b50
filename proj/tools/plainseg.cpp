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

// plainseg: synthetic data, training, evaluation and inference for the
// plain-ViT Cascade Mask R-CNN pipeline.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "plainseg/commands.hpp"
#include "plainseg/error.hpp"

namespace {

using namespace plainseg;

enum ExitCode { kOk = 0, kIoOrOther = 1, kConfigExit = 2, kDataExit = 3, kNumericExit = 4 };

struct Common {
  std::string preset;
  std::string config;
  std::string seed;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "named preset: toy, paper, val-...");
    app->add_option("--config", config, "JSON config file overlaid on the preset");
    app->add_option("--seed", seed, std::string("seed (overrides ") + kSeedEnvVar + ")");
    app->add_option("--out", out, "output directory");
  }

  ConfigSources sources() const {
    ConfigSources s;
    if (!preset.empty()) s.preset = preset;
    if (!config.empty()) s.config_path = config;
    if (!seed.empty()) s.seed = parse_seed(seed, "--seed");
    if (!out.empty()) s.out_dir = out;
    return s;
  }
};

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig: return kConfigExit;
    case ErrorKind::kData: return kDataExit;
    case ErrorKind::kNumeric: return kNumericExit;
    case ErrorKind::kIo: return kIoOrOther;
  }
  return kIoOrOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plainseg: plain ViT + Cascade Mask R-CNN instance segmentation"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, infer_c, prev_c;

  auto* gen = app.add_subcommand("generate-data", "write the synthetic long-tailed shapes dataset");
  gen_c.attach(gen);
  std::optional<int> gen_images;
  std::optional<double> gen_rare;
  gen->add_option("--num-images", gen_images, "number of images");
  gen->add_option("--rare-fraction", gen_rare, "target share of rare-class instances");

  auto* train = app.add_subcommand("train", "train a model");
  train_c.attach(train);
  std::string train_data, train_resume;
  std::optional<std::int64_t> train_steps;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--steps", train_steps, "stop after this many total steps");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a results file");
  eval_c.attach(eval);
  std::string eval_ckpt, eval_data, eval_dets, eval_weights = "ema";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--detections", eval_dets, "COCO results JSON to score instead of running a model");
  eval->add_option("--weights", eval_weights, "ema or raw")->check(CLI::IsMember({"ema", "raw"}));

  auto* infer = app.add_subcommand("infer", "segment one image");
  infer_c.attach(infer);
  std::string infer_ckpt, infer_image, infer_weights = "ema";
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint file (omit for an untrained model)");
  infer->add_option("--image", infer_image, "PNG image")->required();
  infer->add_option("--weights", infer_weights, "ema or raw")->check(CLI::IsMember({"ema", "raw"}));

  auto* prev = app.add_subcommand("augment-preview", "render augmented samples with their annotations");
  prev_c.attach(prev);
  std::string prev_data;
  int prev_n = 8;
  prev->add_option("--data", prev_data, "dataset directory")->required();
  prev->add_option("-n,--count", prev_n, "number of previews");

  auto* stats = app.add_subcommand("stats", "per-category instance counts and rare share");
  std::string stats_data, stats_out;
  stats->add_option("--data", stats_data, "dataset directory")->required();
  stats->add_option("--out", stats_out, "write the stats JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (gen->parsed()) {
      RunConfig cfg = resolve_config(gen_c.sources());
      if (gen_images) cfg.data.num_images = *gen_images;
      if (gen_rare) cfg.data.rare_fraction_target = *gen_rare;
      const std::string dir = gen_c.out.empty() ? "data/toy" : gen_c.out;
      cfg.out_dir = dir;
      const ToyDataset ds = cmd_generate_data(cfg, dir);
      std::cout << "wrote " << ds.manifest.images.size() << " images and "
                << ds.manifest.annotations.size() << " instances to " << dir << "\n";
    } else if (train->parsed()) {
      const RunConfig cfg = resolve_config(train_c.sources());
      TrainOptions o;
      o.data_dir = train_data;
      if (!train_resume.empty()) o.resume = train_resume;
      o.steps = train_steps;
      cmd_train(cfg, o, std::cout);
    } else if (eval->parsed()) {
      const std::string out = eval_c.out.empty() ? "eval" : eval_c.out;
      if (!eval_dets.empty()) {
        const RunConfig cfg = resolve_config(eval_c.sources());
        cmd_eval_detections(eval_dets, eval_data, cfg.eval, out, "detections", std::cout);
      } else {
        if (eval_ckpt.empty()) throw ConfigError("eval needs --checkpoint or --detections");
        cmd_eval(eval_ckpt, eval_data, parse_weight_choice(eval_weights), out, std::cout);
      }
    } else if (infer->parsed()) {
      LoadedModel model;
      if (!infer_ckpt.empty()) {
        model = load_model(infer_ckpt, parse_weight_choice(infer_weights));
      } else {
        model.config = resolve_config(infer_c.sources());
        model.params = build_model_params(model.config.model);
      }
      const std::string out = infer_c.out.empty() ? "infer" : infer_c.out;
      const InferOutputs r = cmd_infer(model, infer_image, out);
      std::cout << r.detections.size() << " detections; wrote " << r.overlay_path << " and "
                << r.detections_path << "\n";
    } else if (prev->parsed()) {
      const RunConfig cfg = resolve_config(prev_c.sources());
      const std::string out = prev_c.out.empty() ? "preview" : prev_c.out;
      const auto recs = cmd_augment_preview(cfg, prev_data, prev_n, out);
      std::cout << "wrote " << recs.size() << " previews to " << out << "\n";
    } else if (stats->parsed()) {
      const std::string j = cmd_stats(stats_data, std::cout);
      if (!stats_out.empty()) write_text_file(stats_out, j + "\n");
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoOrOther;
  }
  return kOk;
}
