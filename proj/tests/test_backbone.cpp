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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "plainseg/backbone.hpp"
#include "plainseg/error.hpp"
#include "plainseg/image.hpp"
#include "tiny_model.hpp"

using namespace plainseg;
using plainseg::testing::grad_check;
using plainseg::testing::random_projection;
using plainseg::testing::random_tensor;

namespace {

BackboneConfig tiny() { return plainseg::testing::tiny_model_config().backbone; }

ParamStore tiny_params(const BackboneConfig& cfg) {
  ParamStore p;
  init_backbone_params(p, cfg);
  // Non-trivial norms and biases so their gradients are exercised.
  Rng rng(5);
  for (auto& e : p.entries())
    if (!e.decay)
      for (double& v : e.var.mutable_value().storage()) v += uniform(rng, -0.2, 0.2);
  return p;
}

}  // namespace

TEST_CASE("backbone output and pyramid shapes") {
  const BackboneConfig cfg = BackboneConfig{};
  ParamStore p;
  init_backbone_params(p, cfg);
  const ag::Var img(random_tensor({3, 128, 128}, 1));
  ag::NoGradGuard ng;
  const FeatureMap fm = backbone_forward(p, cfg, img);
  CHECK(fm.values.shape() == Shape{96, 16, 16});
  CHECK(fm.stride == 8);
  const FeaturePyramid pyr = build_pyramid(p, cfg, fm);
  REQUIRE(pyr.levels.size() == 5u);
  CHECK(pyr.strides == std::vector<int>{2, 4, 8, 16, 32});
  const int sides[5] = {64, 32, 16, 8, 4};
  for (int l = 0; l < 5; ++l) CHECK(pyr.levels[l].shape() == Shape{32, sides[l], sides[l]});
}

TEST_CASE("every block keeps the token grid and width") {
  const BackboneConfig cfg = tiny();
  const ParamStore p = tiny_params(cfg);
  ag::NoGradGuard ng;
  ag::Var x = patch_embed(p, cfg, ag::Var(random_tensor({3, 32, 32}, 2)));
  for (int i = 0; i < cfg.depth; ++i) {
    const ag::Var y = block_forward(p, cfg, i, x, 4, 4, cfg.is_global(i));
    CHECK(y.shape() == x.shape());
    x = y;
  }
  CHECK_THROWS_AS(block_forward(p, cfg, 0, ag::Var(Tensor({15, 8})), 4, 4, false), DimensionError);
}

TEST_CASE("windowed attention is local, global attention is not") {
  const BackboneConfig cfg = tiny();
  const ParamStore p = tiny_params(cfg);
  ag::NoGradGuard ng;
  const Tensor base = random_tensor({16, 8}, 3);
  Tensor moved = base;
  moved.at(0, 3) += 1.0;  // token (0, 0): window 0 of the 2x2 windows
  const auto in_window0 = [](int t) { return (t / 4) < 2 && (t % 4) < 2; };
  for (bool global : {false, true}) {
    const Tensor a = block_forward(p, cfg, 0, ag::Var(base), 4, 4, global).value();
    const Tensor b = block_forward(p, cfg, 0, ag::Var(moved), 4, 4, global).value();
    bool outside_changed = false;
    for (int t = 0; t < 16; ++t) {
      if (in_window0(t)) continue;
      for (int d = 0; d < 8; ++d) outside_changed |= a.at(t, d) != b.at(t, d);
    }
    CHECK(outside_changed == global);
  }
}

TEST_CASE("window layout: square tiles, ragged at the border") {
  const auto l = attention_layout(5, 5, 8, 2, 4, false);
  REQUIRE(l->windows.size() == 4u);
  CHECK(l->windows[0].size() == 16u);
  CHECK(l->windows[1].size() == 4u);
  CHECK(l->windows[2].size() == 4u);
  CHECK(l->windows[3].size() == 1u);
  std::vector<int> all;
  for (const auto& w : l->windows) all.insert(all.end(), w.begin(), w.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 25; ++i) CHECK(all[i] == i);
  CHECK(attention_layout(5, 5, 8, 2, 4, true)->windows.size() == 1u);
}

TEST_CASE("a global block is equivariant to token permutations") {
  const BackboneConfig cfg = tiny();
  const ParamStore p = tiny_params(cfg);
  ag::NoGradGuard ng;
  const Tensor x = random_tensor({16, 8}, 4);
  std::vector<int> perm(16);
  for (int i = 0; i < 16; ++i) perm[i] = (i * 7 + 3) % 16;
  Tensor xp({16, 8});
  for (int t = 0; t < 16; ++t)
    for (int d = 0; d < 8; ++d) xp.at(t, d) = x.at(perm[t], d);
  const Tensor y = block_forward(p, cfg, 1, ag::Var(x), 4, 4, true).value();
  const Tensor yp = block_forward(p, cfg, 1, ag::Var(xp), 4, 4, true).value();
  for (int t = 0; t < 16; ++t)
    for (int d = 0; d < 8; ++d) CHECK(yp.at(t, d) == doctest::Approx(y.at(perm[t], d)).epsilon(1e-12));
}

TEST_CASE("position table resizes for other grid sizes and is exact at the native grid") {
  const BackboneConfig cfg = tiny();
  const ParamStore p = tiny_params(cfg);
  ag::NoGradGuard ng;
  const ag::Var small(random_tensor({3, 48, 64}, 5));
  CHECK(patch_embed(p, cfg, small).shape() == Shape{6 * 8, 8});
  const Tensor r = ag::bicubic_resize_tokens(p.get("backbone.pos_embed"), 4, 4, 4, 4).value();
  const Tensor& pos = p.get("backbone.pos_embed").value();
  for (std::size_t i = 0; i < r.numel(); ++i) CHECK(r[i] == doctest::Approx(pos[i]).epsilon(1e-12));
  CHECK_THROWS_AS(patch_embed(p, cfg, ag::Var(Tensor({3, 30, 32}))), DimensionError);
}

TEST_CASE("gradients: one windowed and one global block") {
  const BackboneConfig cfg = tiny();
  const ParamStore p = tiny_params(cfg);
  ag::Var x(random_tensor({16, 8}, 6), true);
  for (int i = 0; i < 2; ++i) {
    std::vector<ag::Var> inputs = {x};
    for (const char* leaf : {"norm1.weight", "attn.qkv.weight", "attn.qkv.bias", "attn.proj.weight",
                             "norm2.bias", "mlp.fc1.weight", "mlp.fc2.weight"})
      inputs.push_back(p.get("backbone.blocks." + std::to_string(i) + "." + leaf));
    const auto r = grad_check(
        [&] { return random_projection(block_forward(p, cfg, i, x, 4, 4, cfg.is_global(i))); }, inputs, 1e-4);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("gradients: full backbone and pyramid from the image") {
  const BackboneConfig cfg = tiny();
  const ParamStore p = tiny_params(cfg);
  ag::Var img(random_tensor({3, 32, 32}, 7), true);
  const std::vector<ag::Var> inputs = {img,
                                       p.get("backbone.patch_embed.weight"),
                                       p.get("backbone.pos_embed"),
                                       p.get("pyramid.up4.deconv1.weight"),
                                       p.get("pyramid.up2.deconv1.weight"),
                                       p.get("pyramid.proj3.weight"),
                                       p.get("pyramid.proj4.bias")};
  const auto r = grad_check(
      [&] {
        const FeaturePyramid pyr = build_pyramid(p, cfg, backbone_forward(p, cfg, img));
        std::vector<ag::Var> parts;
        for (std::size_t l = 0; l < pyr.levels.size(); ++l)
          parts.push_back(random_projection(pyr.levels[l], 100 + l));
        const std::vector<double> w(parts.size(), 1.0);
        return ag::weighted_sum(parts, w);
      },
      inputs, 1e-6, 12);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("backbone config validation") {
  BackboneConfig c;
  c.img_size = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = BackboneConfig{};
  c.global_block_indices = {9};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = BackboneConfig{};
  c.num_heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
