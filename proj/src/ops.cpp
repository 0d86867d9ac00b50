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

#include "plainseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace plainseg::ag {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

const Tensor& pv(Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out(a.shape());
  const double* x = a.value().data();
  const double* y = b.value().data();
  double* o = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) o[i] = x[i] + y[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(self, 0, self.grad);
    accumulate(self, 1, self.grad);
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    if (Tensor* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += s * self.grad[i];
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] < 0.0 ? 0.0 : x.value()[i];
  return make_result(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0)) {
      const Tensor& in = pv(self, 0);
      for (std::size_t i = 0; i < g->numel(); ++i)
        if (in[i] > 0.0) (*g)[i] += self.grad[i];
    }
  });
}

Var gelu(const Var& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = x.value()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    if (Tensor* g = parent_grad(self, 0)) {
      const Tensor& in = pv(self, 0);
      for (std::size_t i = 0; i < g->numel(); ++i) {
        const double v = in[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        (*g)[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().storage()) s += v;
  return make_result(Tensor({1}, s), {x}, [](Node& self) {
    if (Tensor* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[0];
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x.value().ndim() == 2 && w.value().ndim() == 2, "linear: expects 2-D input and weight");
  const int n = x.dim(0);
  const int in = x.dim(1);
  const int out_dim = w.dim(1);
  require(w.dim(0) == in, "linear: inner dimension mismatch");
  Tensor out({n, out_dim});
  if (b.defined()) {
    require(static_cast<int>(b.numel()) == out_dim, "linear: bias size mismatch");
    for (int r = 0; r < n; ++r) std::copy_n(b.value().data(), out_dim, out.data() + r * out_dim);
  }
  kernels::gemm(false, false, n, out_dim, in, 1.0, x.value().data(), in, w.value().data(),
                out_dim, b.defined() ? 1.0 : 0.0, out.data(), out_dim);
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(std::move(out), std::move(parents), [n, in, out_dim](Node& self) {
    const Tensor& xv = pv(self, 0);
    const Tensor& wv = pv(self, 1);
    if (Tensor* gx = parent_grad(self, 0))
      kernels::gemm(false, true, n, in, out_dim, 1.0, self.grad.data(), out_dim, wv.data(),
                    out_dim, 1.0, gx->data(), in);
    if (Tensor* gw = parent_grad(self, 1))
      kernels::gemm(true, false, in, out_dim, n, 1.0, xv.data(), in, self.grad.data(), out_dim,
                    1.0, gw->data(), out_dim);
    if (self.parents.size() > 2) {
      if (Tensor* gb = parent_grad(self, 2))
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < out_dim; ++c) (*gb)[c] += self.grad[r * out_dim + c];
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int dim = x.value().dim(-1);
  const int rows = static_cast<int>(x.numel() / dim);
  require(static_cast<int>(gamma.numel()) == dim && static_cast<int>(beta.numel()) == dim,
          "layer_norm: parameter size mismatch");
  Tensor out(x.shape());
  auto stats = std::make_shared<std::vector<double>>(2 * static_cast<std::size_t>(rows));
  kernels::layer_norm_forward(x.value().data(), gamma.value().data(), beta.value().data(), rows,
                              dim, eps, out.data(), stats->data(), stats->data() + rows);
  return make_result(std::move(out), {x, gamma, beta}, [rows, dim, stats](Node& self) {
    Tensor dx_scratch;
    Tensor* gx = parent_grad(self, 0);
    if (!gx) {
      dx_scratch = Tensor(pv(self, 0).shape());
      gx = &dx_scratch;
    }
    Tensor dg_scratch({dim});
    Tensor db_scratch({dim});
    Tensor* gg = parent_grad(self, 1);
    Tensor* gb = parent_grad(self, 2);
    kernels::layer_norm_backward(pv(self, 0).data(), pv(self, 1).data(), stats->data(),
                                 stats->data() + rows, self.grad.data(), rows, dim, gx->data(),
                                 gg ? gg->data() : dg_scratch.data(),
                                 gb ? gb->data() : db_scratch.data());
  });
}

Var attention(const Var& qkv, std::shared_ptr<const kernels::AttentionLayout> layout,
              std::vector<double>* probs_out) {
  require(qkv.value().ndim() == 2 && qkv.dim(0) == layout->tokens &&
              qkv.dim(1) == 3 * layout->dim,
          "attention: qkv shape does not match layout");
  require(layout->dim % layout->heads == 0, "attention: dim not divisible by heads");
  Tensor out({layout->tokens, layout->dim});
  auto probs = std::make_shared<std::vector<double>>();
  kernels::attention_forward(*layout, qkv.value().data(), out.data(), *probs);
  if (probs_out) *probs_out = *probs;
  return make_result(std::move(out), {qkv}, [layout, probs](Node& self) {
    if (Tensor* g = parent_grad(self, 0))
      kernels::attention_backward(*layout, pv(self, 0).data(), *probs, self.grad.data(),
                                  g->data());
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int ksize, int stride, int pad) {
  const bool batched = x.value().ndim() == 4;
  require(batched || x.value().ndim() == 3, "conv2d: expects [C,H,W] or [N,C,H,W]");
  const int n = batched ? x.dim(0) : 1;
  const int cin = x.value().dim(-3);
  const int h = x.value().dim(-2);
  const int wd = x.value().dim(-1);
  const int cout = w.dim(0);
  require(w.dim(1) == cin * ksize * ksize, "conv2d: weight shape mismatch");
  const int oh = (h + 2 * pad - ksize) / stride + 1;
  const int ow = (wd + 2 * pad - ksize) / stride + 1;
  const int kdim = cin * ksize * ksize;
  const int plane = oh * ow;
  Tensor out(batched ? Shape{n, cout, oh, ow} : Shape{cout, oh, ow});
  std::vector<double> col(static_cast<std::size_t>(kdim) * plane);
  for (int s = 0; s < n; ++s) {
    const double* xs = x.value().data() + static_cast<std::size_t>(s) * cin * h * wd;
    double* ys = out.data() + static_cast<std::size_t>(s) * cout * plane;
    const double* cptr = xs;
    if (ksize == 1 && stride == 1 && pad == 0) {
      cptr = xs;
    } else {
      kernels::im2col(xs, cin, h, wd, ksize, stride, pad, col.data());
      cptr = col.data();
    }
    if (b.defined())
      for (int c = 0; c < cout; ++c) std::fill_n(ys + c * plane, plane, b.value()[c]);
    kernels::gemm(false, false, cout, plane, kdim, 1.0, w.value().data(), kdim, cptr, plane,
                  b.defined() ? 1.0 : 0.0, ys, plane);
  }
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(std::move(out), std::move(parents),
                     [=](Node& self) {
                       const Tensor& xv = pv(self, 0);
                       const Tensor& wv = pv(self, 1);
                       Tensor* gx = parent_grad(self, 0);
                       Tensor* gw = parent_grad(self, 1);
                       Tensor* gb = self.parents.size() > 2 ? parent_grad(self, 2) : nullptr;
                       const bool pointwise = ksize == 1 && stride == 1 && pad == 0;
                       std::vector<double> colb(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
                       std::vector<double> dcol(static_cast<std::size_t>(kdim) * plane);
                       for (int s = 0; s < n; ++s) {
                         const double* xs = xv.data() + static_cast<std::size_t>(s) * cin * h * wd;
                         const double* dy = self.grad.data() + static_cast<std::size_t>(s) * cout * plane;
                         if (gw) {
                           const double* cptr = xs;
                           if (!pointwise) {
                             kernels::im2col(xs, cin, h, wd, ksize, stride, pad, colb.data());
                             cptr = colb.data();
                           }
                           kernels::gemm(false, true, cout, kdim, plane, 1.0, dy, plane, cptr,
                                         plane, 1.0, gw->data(), kdim);
                         }
                         if (gb)
                           for (int c = 0; c < cout; ++c) {
                             double acc = 0.0;
                             for (int p = 0; p < plane; ++p) acc += dy[c * plane + p];
                             (*gb)[c] += acc;
                           }
                         if (gx) {
                           double* gxs = gx->data() + static_cast<std::size_t>(s) * cin * h * wd;
                           if (pointwise) {
                             kernels::gemm(true, false, kdim, plane, cout, 1.0, wv.data(), kdim,
                                           dy, plane, 1.0, gxs, plane);
                           } else {
                             kernels::gemm(true, false, kdim, plane, cout, 1.0, wv.data(), kdim,
                                           dy, plane, 0.0, dcol.data(), plane);
                             kernels::col2im(dcol.data(), cin, h, wd, ksize, stride, pad, gxs);
                           }
                         }
                       }
                     });
}

Var conv_transpose2x2(const Var& x, const Var& w, const Var& b) {
  const bool batched = x.value().ndim() == 4;
  require(batched || x.value().ndim() == 3, "conv_transpose2x2: expects [C,H,W] or [N,C,H,W]");
  const int n = batched ? x.dim(0) : 1;
  const int cin = x.value().dim(-3);
  const int h = x.value().dim(-2);
  const int wd = x.value().dim(-1);
  require(w.dim(0) == cin && w.dim(1) % 4 == 0, "conv_transpose2x2: weight shape mismatch");
  const int cout = w.dim(1) / 4;
  const int plane = h * wd;
  Tensor out(batched ? Shape{n, cout, 2 * h, 2 * wd} : Shape{cout, 2 * h, 2 * wd});
  std::vector<double> z(static_cast<std::size_t>(cout) * 4 * plane);
  for (int s = 0; s < n; ++s) {
    const double* xs = x.value().data() + static_cast<std::size_t>(s) * cin * plane;
    kernels::gemm(true, false, cout * 4, plane, cin, 1.0, w.value().data(), cout * 4, xs, plane,
                  0.0, z.data(), plane);
    double* ys = out.data() + static_cast<std::size_t>(s) * cout * 4 * plane;
    for (int co = 0; co < cout; ++co)
      for (int k = 0; k < 4; ++k) {
        const int dy = k / 2;
        const int dx = k % 2;
        const double bias = b.defined() ? b.value()[co] : 0.0;
        const double* zr = z.data() + (static_cast<std::size_t>(co) * 4 + k) * plane;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < wd; ++j)
            ys[(static_cast<std::size_t>(co) * 2 * h + 2 * i + dy) * 2 * wd + 2 * j + dx] =
                zr[i * wd + j] + bias;
      }
  }
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(std::move(out), std::move(parents), [=](Node& self) {
    const Tensor& xv = pv(self, 0);
    const Tensor& wv = pv(self, 1);
    Tensor* gx = parent_grad(self, 0);
    Tensor* gw = parent_grad(self, 1);
    Tensor* gb = self.parents.size() > 2 ? parent_grad(self, 2) : nullptr;
    std::vector<double> dz(static_cast<std::size_t>(cout) * 4 * plane);
    for (int s = 0; s < n; ++s) {
      const double* gy = self.grad.data() + static_cast<std::size_t>(s) * cout * 4 * plane;
      for (int co = 0; co < cout; ++co)
        for (int k = 0; k < 4; ++k) {
          const int dy = k / 2;
          const int dx = k % 2;
          double* dzr = dz.data() + (static_cast<std::size_t>(co) * 4 + k) * plane;
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < wd; ++j)
              dzr[i * wd + j] =
                  gy[(static_cast<std::size_t>(co) * 2 * h + 2 * i + dy) * 2 * wd + 2 * j + dx];
        }
      const double* xs = xv.data() + static_cast<std::size_t>(s) * cin * plane;
      if (gw)
        kernels::gemm(false, true, cin, cout * 4, plane, 1.0, xs, plane, dz.data(), plane, 1.0,
                      gw->data(), cout * 4);
      if (gx)
        kernels::gemm(false, false, cin, plane, cout * 4, 1.0, wv.data(), cout * 4, dz.data(),
                      plane, 1.0, gx->data() + static_cast<std::size_t>(s) * cin * plane, plane);
      if (gb)
        for (int co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int k = 0; k < 4 * plane; ++k) acc += dz[static_cast<std::size_t>(co) * 4 * plane + k];
          (*gb)[co] += acc;
        }
    }
  });
}

Var max_pool2x2(const Var& x) {
  const bool batched = x.value().ndim() == 4;
  require(batched || x.value().ndim() == 3, "max_pool2x2: expects [C,H,W] or [N,C,H,W]");
  const int planes = static_cast<int>(x.numel() / (static_cast<std::size_t>(x.value().dim(-2)) *
                                                   x.value().dim(-1)));
  const int h = x.value().dim(-2);
  const int w = x.value().dim(-1);
  const int oh = std::max(1, h / 2);
  const int ow = std::max(1, w / 2);
  Shape shape = x.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  Tensor out(shape);
  auto arg = std::make_shared<std::vector<int>>(out.numel());
  for (int p = 0; p < planes; ++p) {
    const double* xp = x.value().data() + static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        int best = -1;
        double bv = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int y = 2 * i + dy;
            const int xx = 2 * j + dx;
            if (y >= h || xx >= w) continue;
            const double v = xp[y * w + xx];
            if (best < 0 || v > bv) {
              best = y * w + xx;
              bv = v;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + i) * ow + j;
        out[o] = bv;
        (*arg)[o] = p * h * w + best;
      }
  }
  return make_result(std::move(out), {x}, [arg](Node& self) {
    if (Tensor* g = parent_grad(self, 0))
      for (std::size_t o = 0; o < arg->size(); ++o) (*g)[(*arg)[o]] += self.grad[o];
  });
}

Var reshape(const Var& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
  return make_result(x.value().reshaped(std::move(shape)), {x},
                     [](Node& self) { accumulate(self, 0, self.grad); });
}

Var permute(const Var& x, const std::vector<int>& perm) {
  const int nd = x.value().ndim();
  require(static_cast<int>(perm.size()) == nd, "permute: rank mismatch");
  const Shape& in_shape = x.shape();
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<std::size_t> in_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  // src[k] = input flat offset of output element k.
  auto src = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<int> idx(nd, 0);
  for (std::size_t k = 0; k < x.numel(); ++k) {
    std::size_t off = 0;
    for (int i = 0; i < nd; ++i) off += idx[i] * in_strides[perm[i]];
    (*src)[k] = off;
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = x.value()[(*src)[k]];
  return make_result(std::move(out), {x}, [src](Node& self) {
    if (Tensor* g = parent_grad(self, 0))
      for (std::size_t k = 0; k < src->size(); ++k) (*g)[(*src)[k]] += self.grad[k];
  });
}

Var concat0(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat0: no inputs");
  Shape shape = xs[0].shape();
  int rows = 0;
  for (const Var& v : xs) {
    require(v.value().ndim() == static_cast<int>(shape.size()), "concat0: rank mismatch");
    for (std::size_t d = 1; d < shape.size(); ++d)
      require(v.shape()[d] == shape[d], "concat0: trailing shape mismatch");
    rows += v.dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& v : xs) {
    offsets.push_back(off);
    std::copy_n(v.value().data(), v.numel(), out.data() + off);
    off += v.numel();
  }
  return make_result(std::move(out), xs, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (Tensor* g = parent_grad(self, i))
        for (std::size_t k = 0; k < g->numel(); ++k) (*g)[k] += self.grad[offsets[i] + k];
  });
}

Var roi_align_levels(const std::vector<Var>& levels, std::span<const double> strides,
                     std::span<const double> boxes, std::span<const int> level_of_box,
                     const kernels::RoiAlignParams& params) {
  require(!levels.empty() && levels.size() == strides.size(), "roi_align_levels: bad levels");
  const int rois = static_cast<int>(level_of_box.size());
  require(static_cast<int>(boxes.size()) == 4 * rois, "roi_align_levels: box count mismatch");
  const int channels = levels[0].dim(0);
  const int bins = params.pooled_h * params.pooled_w;
  Tensor out({rois, channels, params.pooled_h, params.pooled_w});
  // Group RoIs by level so each kernel call sees one feature map.
  auto groups = std::make_shared<std::vector<std::vector<int>>>(levels.size());
  for (int r = 0; r < rois; ++r) (*groups)[level_of_box[r]].push_back(r);
  auto level_boxes = std::make_shared<std::vector<std::vector<double>>>(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& ids = (*groups)[l];
    if (ids.empty()) continue;
    auto& lb = (*level_boxes)[l];
    for (int r : ids) lb.insert(lb.end(), boxes.begin() + 4 * r, boxes.begin() + 4 * r + 4);
    kernels::RoiAlignParams p = params;
    p.spatial_scale = 1.0 / strides[l];
    const Tensor& f = levels[l].value();
    std::vector<double> tmp(ids.size() * channels * bins);
    kernels::roi_align_forward(f.data(), f.dim(0), f.dim(1), f.dim(2), lb, p, tmp.data());
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy_n(tmp.data() + i * channels * bins, channels * bins,
                  out.data() + static_cast<std::size_t>(ids[i]) * channels * bins);
  }
  std::vector<double> scales(strides.begin(), strides.end());
  return make_result(std::move(out), levels,
                     [groups, level_boxes, scales, params, channels, bins](Node& self) {
                       for (std::size_t l = 0; l < groups->size(); ++l) {
                         const auto& ids = (*groups)[l];
                         if (ids.empty()) continue;
                         Tensor* g = parent_grad(self, l);
                         if (!g) continue;
                         std::vector<double> tmp(ids.size() * channels * bins);
                         for (std::size_t i = 0; i < ids.size(); ++i)
                           std::copy_n(self.grad.data() + static_cast<std::size_t>(ids[i]) * channels * bins,
                                       channels * bins, tmp.data() + i * channels * bins);
                         kernels::RoiAlignParams p = params;
                         p.spatial_scale = 1.0 / scales[l];
                         const Tensor& f = self.parents[l]->value;
                         kernels::roi_align_backward(tmp.data(), f.dim(0), f.dim(1), f.dim(2),
                                                     (*level_boxes)[l], p, g->data());
                       }
                     });
}

Var select_channel(const Var& x, std::span<const int> index) {
  require(x.value().ndim() == 4 && static_cast<int>(index.size()) == x.dim(0),
          "select_channel: expects [R,K,H,W] and R indices");
  const int r = x.dim(0);
  const int k = x.dim(1);
  const int plane = x.dim(2) * x.dim(3);
  Tensor out({r, x.dim(2), x.dim(3)});
  auto idx = std::make_shared<std::vector<int>>(index.begin(), index.end());
  for (int i = 0; i < r; ++i) {
    require((*idx)[i] >= 0 && (*idx)[i] < k, "select_channel: index out of range");
    std::copy_n(x.value().data() + (static_cast<std::size_t>(i) * k + (*idx)[i]) * plane, plane,
                out.data() + static_cast<std::size_t>(i) * plane);
  }
  return make_result(std::move(out), {x}, [idx, k, plane](Node& self) {
    if (Tensor* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (int p = 0; p < plane; ++p)
          (*g)[(i * k + (*idx)[i]) * plane + p] += self.grad[i * plane + p];
  });
}

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.75;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

// Row-major [dst, src] interpolation matrix with border clamping.
std::vector<double> cubic_matrix(int src, int dst) {
  std::vector<double> m(static_cast<std::size_t>(dst) * src, 0.0);
  const double ratio = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double pos = (i + 0.5) * ratio - 0.5;
    const int base = static_cast<int>(std::floor(pos));
    const double t = pos - base;
    for (int k = -1; k <= 2; ++k) {
      const int s = std::clamp(base + k, 0, src - 1);
      m[static_cast<std::size_t>(i) * src + s] += cubic_weight(t - k);
    }
  }
  return m;
}

}  // namespace

Var bicubic_resize_tokens(const Var& x, int h, int w, int nh, int nw) {
  require(x.value().ndim() == 2 && x.dim(0) == h * w, "bicubic_resize_tokens: shape mismatch");
  const int d = x.dim(1);
  auto ry = std::make_shared<std::vector<double>>(cubic_matrix(h, nh));
  auto rx = std::make_shared<std::vector<double>>(cubic_matrix(w, nw));
  Tensor out({nh * nw, d});
  for (int i = 0; i < nh; ++i)
    for (int j = 0; j < nw; ++j) {
      double* o = out.data() + (static_cast<std::size_t>(i) * nw + j) * d;
      for (int y = 0; y < h; ++y) {
        const double wy = (*ry)[static_cast<std::size_t>(i) * h + y];
        if (wy == 0.0) continue;
        for (int xx = 0; xx < w; ++xx) {
          const double wgt = wy * (*rx)[static_cast<std::size_t>(j) * w + xx];
          if (wgt == 0.0) continue;
          const double* src = x.value().data() + (static_cast<std::size_t>(y) * w + xx) * d;
          for (int c = 0; c < d; ++c) o[c] += wgt * src[c];
        }
      }
    }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor* g = parent_grad(self, 0);
    if (!g) return;
    for (int i = 0; i < nh; ++i)
      for (int j = 0; j < nw; ++j) {
        const double* go = self.grad.data() + (static_cast<std::size_t>(i) * nw + j) * d;
        for (int y = 0; y < h; ++y) {
          const double wy = (*ry)[static_cast<std::size_t>(i) * h + y];
          if (wy == 0.0) continue;
          for (int xx = 0; xx < w; ++xx) {
            const double wgt = wy * (*rx)[static_cast<std::size_t>(j) * w + xx];
            if (wgt == 0.0) continue;
            double* dst = g->data() + (static_cast<std::size_t>(y) * w + xx) * d;
            for (int c = 0; c < d; ++c) dst[c] += wgt * go[c];
          }
        }
      }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& targets, const Tensor& weights,
                    double normalizer) {
  require(logits.numel() == targets.numel() && logits.numel() == weights.numel(),
          "bce_with_logits: size mismatch");
  require(normalizer > 0.0, "bce_with_logits: normalizer must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    if (weights[i] == 0.0) continue;
    const double z = logits.value()[i];
    // max(z,0) - z*t + log(1 + exp(-|z|))
    total += weights[i] * (std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z))));
  }
  return make_result(Tensor({1}, total / normalizer), {logits},
                     [targets, weights, normalizer](Node& self) {
                       Tensor* g = parent_grad(self, 0);
                       if (!g) return;
                       const double up = self.grad[0] / normalizer;
                       const Tensor& z = pv(self, 0);
                       for (std::size_t i = 0; i < g->numel(); ++i) {
                         if (weights[i] == 0.0) continue;
                         const double sig = 1.0 / (1.0 + std::exp(-z[i]));
                         (*g)[i] += up * weights[i] * (sig - targets[i]);
                       }
                     });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, double normalizer) {
  require(logits.value().ndim() == 2 && static_cast<int>(labels.size()) == logits.dim(0),
          "softmax_cross_entropy: expects [R,C] logits and R labels");
  require(normalizer > 0.0, "softmax_cross_entropy: normalizer must be positive");
  const int rows = logits.dim(0);
  const int cols = logits.dim(1);
  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double* z = logits.value().data() + static_cast<std::size_t>(r) * cols;
    double* p = probs->data() + static_cast<std::size_t>(r) * cols;
    const double mx = *std::max_element(z, z + cols);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += (p[c] = std::exp(z[c] - mx));
    for (int c = 0; c < cols; ++c) p[c] /= s;
    const int y = (*lab)[r];
    require(y >= 0 && y < cols, "softmax_cross_entropy: label out of range");
    total += -(z[y] - mx - std::log(s));
  }
  return make_result(Tensor({1}, total / normalizer), {logits},
                     [probs, lab, cols, normalizer](Node& self) {
                       Tensor* g = parent_grad(self, 0);
                       if (!g) return;
                       const double up = self.grad[0] / normalizer;
                       for (std::size_t r = 0; r < lab->size(); ++r)
                         for (int c = 0; c < cols; ++c) {
                           const std::size_t i = r * cols + c;
                           (*g)[i] += up * ((*probs)[i] - (c == (*lab)[r] ? 1.0 : 0.0));
                         }
                     });
}

Var smooth_l1(const Var& pred, const Tensor& target, const Tensor& row_weights, double beta,
              double normalizer) {
  require(pred.numel() == target.numel(), "smooth_l1: size mismatch");
  require(normalizer > 0.0, "smooth_l1: normalizer must be positive");
  const int rows = static_cast<int>(row_weights.numel());
  require(rows > 0 ? pred.numel() % rows == 0 : pred.numel() == 0, "smooth_l1: row mismatch");
  const int cols = rows > 0 ? static_cast<int>(pred.numel() / rows) : 0;
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (row_weights[r] == 0.0) continue;
    for (int c = 0; c < cols; ++c) {
      const double d = std::abs(pred.value()[r * cols + c] - target[r * cols + c]);
      total += row_weights[r] * (d < beta ? 0.5 * d * d / beta : d - 0.5 * beta);
    }
  }
  return make_result(Tensor({1}, total / normalizer), {pred},
                     [target, row_weights, beta, normalizer, rows, cols](Node& self) {
                       Tensor* g = parent_grad(self, 0);
                       if (!g) return;
                       const double up = self.grad[0] / normalizer;
                       const Tensor& p = pv(self, 0);
                       for (int r = 0; r < rows; ++r) {
                         if (row_weights[r] == 0.0) continue;
                         for (int c = 0; c < cols; ++c) {
                           const double d = p[r * cols + c] - target[r * cols + c];
                           const double gd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
                           (*g)[r * cols + c] += up * row_weights[r] * gd;
                         }
                       }
                     });
}

Var weighted_sum(const std::vector<Var>& scalars, std::span<const double> weights) {
  require(scalars.size() == weights.size(), "weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i].numel() == 1, "weighted_sum: inputs must be scalars");
    total += weights[i] * scalars[i].value()[0];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result(Tensor({1}, total), scalars, [w](Node& self) {
    for (std::size_t i = 0; i < w.size(); ++i)
      if (Tensor* g = parent_grad(self, i)) (*g)[0] += w[i] * self.grad[0];
  });
}

}  // namespace plainseg::ag
