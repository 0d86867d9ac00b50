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

// Plain (non-hierarchical) ViT: patch embedding with a learned absolute
// position table, pre-norm blocks with windowed or global self-attention,
// and a simple feature pyramid synthesized from the single output map.

#include <cstdint>
#include <vector>

#include "plainseg/ops.hpp"
#include "plainseg/params.hpp"

namespace plainseg {

struct BackboneConfig {
  int img_size = 128;
  int patch_size = 8;
  int embed_dim = 96;
  int depth = 6;
  int num_heads = 6;
  double mlp_ratio = 4.0;
  int window_size = 4;  // tokens per window side
  std::vector<int> global_block_indices = {2, 5};
  int pyramid_channels = 32;
  std::uint64_t seed = 0;

  void validate() const;
  int grid() const { return img_size / patch_size; }
  int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }
  bool is_global(int block) const;
};

// Channel-first map [D, H', W'] with its stride in input pixels.
struct FeatureMap {
  ag::Var values;
  int stride = 1;
};

// Five levels, finest first; stride doubles per level, shared channel width.
struct FeaturePyramid {
  std::vector<ag::Var> levels;  // each [C, H_l, W_l]
  std::vector<int> strides;
};

// Strides of the pyramid built on a map of stride `s`: s/4, s/2, s, 2s, 4s.
std::vector<int> pyramid_strides(const BackboneConfig& cfg);

// Registers every backbone and pyramid tensor under "backbone." and "pyramid.".
void init_backbone_params(ParamStore& params, const BackboneConfig& cfg);

// image [3, H, W] with H, W multiples of patch_size -> tokens [H/p * W/p, D].
// The position table is bicubically resized when the grid differs from the
// configured one.
ag::Var patch_embed(const ParamStore& params, const BackboneConfig& cfg, const ag::Var& image);

// One pre-norm transformer block on a gh x gw token grid [gh*gw, D].
// probs, when given, receives the attention weights.
ag::Var block_forward(const ParamStore& params, const BackboneConfig& cfg, int index,
                      const ag::Var& tokens, int gh, int gw, bool is_global,
                      std::vector<double>* probs = nullptr);

// Windows of window_size x window_size tokens (ragged at the border) or one
// global window.
std::shared_ptr<const kernels::AttentionLayout> attention_layout(int gh, int gw, int dim,
                                                                 int heads, int window,
                                                                 bool is_global);

FeatureMap backbone_forward(const ParamStore& params, const BackboneConfig& cfg,
                            const ag::Var& image);

FeaturePyramid build_pyramid(const ParamStore& params, const BackboneConfig& cfg,
                             const FeatureMap& fm);

}  // namespace plainseg
