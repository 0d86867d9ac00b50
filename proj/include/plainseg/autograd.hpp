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

// Minimal tape-free reverse-mode autodiff. A Var is a handle to a graph node
// holding a value, a lazily allocated gradient, its parents and a closure that
// pushes the node's gradient into the parents. The graph lives exactly as long
// as the Vars that reference it.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "plainseg/tensor.hpp"

namespace plainseg::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
  bool has_grad() const { return !grad.empty() || value.numel() == 0; }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_->requires_grad; }
  // Gradient; empty tensor if nothing flowed here yet.
  const Tensor& grad() const { return node_->grad; }
  Tensor& ensure_grad() { return node_->ensure_grad(); }
  void zero_grad();

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_result(Tensor, std::vector<Var>, std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

// Builds an op result. The closure is kept (and parents retained) only when
// gradients are enabled and some parent requires them.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
void backward(const Var& root);

bool grad_enabled();

// Disables graph construction for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Adds g into parent i's gradient.
void accumulate(Node& self, std::size_t parent, const Tensor& g);
inline Tensor* parent_grad(Node& self, std::size_t parent) {
  auto& p = self.parents[parent];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

}  // namespace plainseg::ag
