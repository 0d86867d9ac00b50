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

#include "plainseg/params.hpp"

#include <cmath>
#include <stdexcept>

namespace plainseg {

ag::Var ParamStore::add(const std::string& name, Tensor init, bool decay) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.push_back({name, ag::Var(std::move(init), true), decay});
  return entries_.back().var;
}

const ag::Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].var;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

namespace init {

namespace {
// Box-Muller on the raw engine keeps sequences identical across standard libraries.
double gaussian(std::mt19937_64& rng) {
  constexpr double kTwoPi = 6.283185307179586476925;
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}
}  // namespace

Tensor trunc_normal(Shape shape, double std, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) {
    double z;
    do {
      z = gaussian(rng);
    } while (std::abs(z) > 2.0);
    v = z * std;
  }
  return t;
}

Tensor normal(Shape shape, double std, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = gaussian(rng) * std;
  return t;
}

Tensor kaiming_fan_out(Shape shape, int fan_out, std::mt19937_64& rng) {
  return normal(std::move(shape), std::sqrt(2.0 / fan_out), rng);
}

}  // namespace init
}  // namespace plainseg
