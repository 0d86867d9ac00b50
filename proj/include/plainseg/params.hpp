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

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "plainseg/autograd.hpp"

namespace plainseg {

// Named trainable tensors in registration order. Names are dotted paths such
// as "backbone.blocks.3.attn.qkv.weight" and key the checkpoint file.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ag::Var var;
    bool decay = true;  // false for biases, norms and positional embeddings
  };

  ag::Var add(const std::string& name, Tensor init, bool decay);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const ag::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace init {

// Normal(0, std) truncated to +-2 std by resampling.
Tensor trunc_normal(Shape shape, double std, std::mt19937_64& rng);
Tensor normal(Shape shape, double std, std::mt19937_64& rng);
// He/Kaiming normal with fan_out, the usual choice for ReLU conv stacks.
Tensor kaiming_fan_out(Shape shape, int fan_out, std::mt19937_64& rng);

}  // namespace init
}  // namespace plainseg
