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

#include "plainseg/backbone.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "plainseg/error.hpp"
#include "plainseg/rng.hpp"

namespace plainseg {

namespace {

std::string blk(int i, const char* leaf) { return "backbone.blocks." + std::to_string(i) + "." + leaf; }

Tensor ones(Shape s) { return Tensor(std::move(s), 1.0); }

// Fan-in scaled normal for convolutions feeding the detection heads.
Tensor fan_in_normal(Shape shape, int fan_in, Rng& rng) {
  return init::trunc_normal(std::move(shape), std::sqrt(1.0 / fan_in), rng);
}

}  // namespace

void BackboneConfig::validate() const {
  if (patch_size <= 0 || img_size <= 0 || img_size % patch_size != 0) {
    throw ConfigError("backbone: img_size must be a positive multiple of patch_size");
  }
  if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ConfigError("backbone: embed_dim must be a positive multiple of num_heads");
  }
  if (embed_dim % 4 != 0) throw ConfigError("backbone: embed_dim must be divisible by 4");
  if (depth < 1) throw ConfigError("backbone: depth must be >= 1");
  if (window_size < 1) throw ConfigError("backbone: window_size must be >= 1");
  if (!(mlp_ratio > 0.0)) throw ConfigError("backbone: mlp_ratio must be positive");
  if (grid() % 4 != 0) throw ConfigError("backbone: token grid side must be divisible by 4");
  if (pyramid_channels < 1) throw ConfigError("backbone: pyramid_channels must be >= 1");
  for (int g : global_block_indices)
    if (g < 0 || g >= depth) throw ConfigError("backbone: global block index out of range");
}

bool BackboneConfig::is_global(int block) const {
  for (int g : global_block_indices)
    if (g == block) return true;
  return false;
}

std::vector<int> pyramid_strides(const BackboneConfig& cfg) {
  const int s = cfg.patch_size;
  return {s / 4 > 0 ? s / 4 : 1, s / 2 > 0 ? s / 2 : 1, s, 2 * s, 4 * s};
}

void init_backbone_params(ParamStore& p, const BackboneConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xB0));
  const int d = cfg.embed_dim;
  const int ps = cfg.patch_size;
  const int g = cfg.grid();
  const int hid = cfg.mlp_hidden();
  p.add("backbone.patch_embed.weight", init::trunc_normal({d, 3 * ps * ps}, 0.02, rng), true);
  p.add("backbone.patch_embed.bias", Tensor({d}), false);
  p.add("backbone.pos_embed", init::trunc_normal({g * g, d}, 0.02, rng), false);
  for (int i = 0; i < cfg.depth; ++i) {
    p.add(blk(i, "norm1.weight"), ones({d}), false);
    p.add(blk(i, "norm1.bias"), Tensor({d}), false);
    p.add(blk(i, "attn.qkv.weight"), init::trunc_normal({d, 3 * d}, 0.02, rng), true);
    p.add(blk(i, "attn.qkv.bias"), Tensor({3 * d}), false);
    p.add(blk(i, "attn.proj.weight"), init::trunc_normal({d, d}, 0.02, rng), true);
    p.add(blk(i, "attn.proj.bias"), Tensor({d}), false);
    p.add(blk(i, "norm2.weight"), ones({d}), false);
    p.add(blk(i, "norm2.bias"), Tensor({d}), false);
    p.add(blk(i, "mlp.fc1.weight"), init::trunc_normal({d, hid}, 0.02, rng), true);
    p.add(blk(i, "mlp.fc1.bias"), Tensor({hid}), false);
    p.add(blk(i, "mlp.fc2.weight"), init::trunc_normal({hid, d}, 0.02, rng), true);
    p.add(blk(i, "mlp.fc2.bias"), Tensor({d}), false);
  }
  const int c = cfg.pyramid_channels;
  const int h2 = d / 2, h4 = d / 4;
  p.add("pyramid.up4.deconv1.weight", fan_in_normal({d, h2 * 4}, d, rng), true);
  p.add("pyramid.up4.deconv1.bias", Tensor({h2}), false);
  p.add("pyramid.up4.deconv2.weight", fan_in_normal({h2, h4 * 4}, h2, rng), true);
  p.add("pyramid.up4.deconv2.bias", Tensor({h4}), false);
  p.add("pyramid.up2.deconv1.weight", fan_in_normal({d, h2 * 4}, d, rng), true);
  p.add("pyramid.up2.deconv1.bias", Tensor({h2}), false);
  const int in_ch[5] = {h4, h2, d, d, d};
  for (int l = 0; l < 5; ++l) {
    const std::string base = "pyramid.proj" + std::to_string(l);
    p.add(base + ".weight", fan_in_normal({c, in_ch[l]}, in_ch[l], rng), true);
    p.add(base + ".bias", Tensor({c}), false);
  }
}

ag::Var patch_embed(const ParamStore& p, const BackboneConfig& cfg, const ag::Var& image) {
  if (image.value().ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("patch_embed: expected a [3, H, W] image, got " + shape_str(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2), ps = cfg.patch_size;
  if (h % ps != 0 || w % ps != 0) {
    throw DimensionError("patch_embed: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by patch size " + std::to_string(ps));
  }
  const int gh = h / ps, gw = w / ps;
  ag::Var x = ag::conv2d(image, p.get("backbone.patch_embed.weight"), p.get("backbone.patch_embed.bias"),
                         ps, ps, 0);                               // [D, gh, gw]
  x = ag::permute(ag::reshape(x, {cfg.embed_dim, gh * gw}), {1, 0});  // [N, D]
  ag::Var pos = p.get("backbone.pos_embed");
  if (gh != cfg.grid() || gw != cfg.grid()) {
    pos = ag::bicubic_resize_tokens(pos, cfg.grid(), cfg.grid(), gh, gw);
  }
  return ag::add(x, pos);
}

std::shared_ptr<const kernels::AttentionLayout> attention_layout(int gh, int gw, int dim, int heads,
                                                                 int window, bool is_global) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int, int, int>, std::shared_ptr<const kernels::AttentionLayout>>
      cache;
  const auto key = std::make_tuple(gh, gw, dim, heads, is_global ? 0 : window);
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto l = std::make_shared<kernels::AttentionLayout>();
  l->tokens = gh * gw;
  l->dim = dim;
  l->heads = heads;
  if (is_global) {
    std::vector<int> all(gh * gw);
    for (int i = 0; i < gh * gw; ++i) all[i] = i;
    l->windows.push_back(std::move(all));
  } else {
    for (int wy = 0; wy < gh; wy += window)
      for (int wx = 0; wx < gw; wx += window) {
        std::vector<int> idx;
        for (int y = wy; y < std::min(gh, wy + window); ++y)
          for (int x = wx; x < std::min(gw, wx + window); ++x) idx.push_back(y * gw + x);
        l->windows.push_back(std::move(idx));
      }
  }
  cache.emplace(key, l);
  return l;
}

ag::Var block_forward(const ParamStore& p, const BackboneConfig& cfg, int i, const ag::Var& x,
                      int gh, int gw, bool is_global, std::vector<double>* probs) {
  if (x.value().ndim() != 2 || x.dim(0) != gh * gw || x.dim(1) != cfg.embed_dim) {
    throw DimensionError("block " + std::to_string(i) + ": expected tokens [" +
                         std::to_string(gh * gw) + ", " + std::to_string(cfg.embed_dim) + "], got " +
                         shape_str(x.shape()));
  }
  const auto layout =
      attention_layout(gh, gw, cfg.embed_dim, cfg.num_heads, cfg.window_size, is_global);
  ag::Var h = ag::layer_norm(x, p.get(blk(i, "norm1.weight")), p.get(blk(i, "norm1.bias")));
  h = ag::linear(h, p.get(blk(i, "attn.qkv.weight")), p.get(blk(i, "attn.qkv.bias")));
  h = ag::attention(h, layout, probs);
  h = ag::linear(h, p.get(blk(i, "attn.proj.weight")), p.get(blk(i, "attn.proj.bias")));
  ag::Var y = ag::add(x, h);
  h = ag::layer_norm(y, p.get(blk(i, "norm2.weight")), p.get(blk(i, "norm2.bias")));
  h = ag::gelu(ag::linear(h, p.get(blk(i, "mlp.fc1.weight")), p.get(blk(i, "mlp.fc1.bias"))));
  h = ag::linear(h, p.get(blk(i, "mlp.fc2.weight")), p.get(blk(i, "mlp.fc2.bias")));
  return ag::add(y, h);
}

FeatureMap backbone_forward(const ParamStore& p, const BackboneConfig& cfg, const ag::Var& image) {
  ag::Var x = patch_embed(p, cfg, image);
  const int gh = image.dim(1) / cfg.patch_size, gw = image.dim(2) / cfg.patch_size;
  const Shape token_shape = x.shape();
  for (int i = 0; i < cfg.depth; ++i) {
    x = block_forward(p, cfg, i, x, gh, gw, cfg.is_global(i));
    if (x.shape() != token_shape) throw DimensionError("backbone: block changed the token shape");
  }
  FeatureMap fm;
  fm.values = ag::reshape(ag::permute(x, {1, 0}), {cfg.embed_dim, gh, gw});
  fm.stride = cfg.patch_size;
  return fm;
}

FeaturePyramid build_pyramid(const ParamStore& p, const BackboneConfig& cfg, const FeatureMap& fm) {
  if (fm.stride != cfg.patch_size) {
    throw DimensionError("build_pyramid: feature stride " + std::to_string(fm.stride) +
                         " does not match patch size " + std::to_string(cfg.patch_size));
  }
  if (fm.values.dim(1) % 4 != 0 || fm.values.dim(2) % 4 != 0) {
    throw DimensionError("build_pyramid: map side must be divisible by 4");
  }
  const ag::Var& x = fm.values;
  auto proj = [&](int l, const ag::Var& v) {
    const std::string base = "pyramid.proj" + std::to_string(l);
    return ag::conv2d(v, p.get(base + ".weight"), p.get(base + ".bias"), 1, 1, 0);
  };
  FeaturePyramid out;
  out.strides = pyramid_strides(cfg);
  ag::Var u4 = ag::gelu(ag::conv_transpose2x2(x, p.get("pyramid.up4.deconv1.weight"),
                                              p.get("pyramid.up4.deconv1.bias")));
  u4 = ag::conv_transpose2x2(u4, p.get("pyramid.up4.deconv2.weight"), p.get("pyramid.up4.deconv2.bias"));
  out.levels.push_back(proj(0, u4));
  out.levels.push_back(proj(
      1, ag::conv_transpose2x2(x, p.get("pyramid.up2.deconv1.weight"), p.get("pyramid.up2.deconv1.bias"))));
  out.levels.push_back(proj(2, x));
  ag::Var d2 = ag::max_pool2x2(x);
  out.levels.push_back(proj(3, d2));
  out.levels.push_back(proj(4, ag::max_pool2x2(d2)));
  return out;
}

}  // namespace plainseg
