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

// Serial reference kernels. Written for clarity, not speed; tests compare the
// production kernels against these.

#include <algorithm>
#include <cmath>

#include "plainseg/kernels.hpp"

namespace plainseg::kernels::ref {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      c[i * ldc + j] = alpha * s + (beta == 0.0 ? 0.0 : beta * c[i * ldc + j]);
    }
  }
}

void im2col(const double* x, int channels, int height, int width, int ksize, int stride, int pad,
            double* col) {
  const int out_h = (height + 2 * pad - ksize) / stride + 1;
  const int out_w = (width + 2 * pad - ksize) / stride + 1;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < ksize; ++ky)
      for (int kx = 0; kx < ksize; ++kx)
        for (int oy = 0; oy < out_h; ++oy)
          for (int ox = 0; ox < out_w; ++ox) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            const bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
            col[((c * ksize + ky) * ksize + kx) * out_h * out_w + oy * out_w + ox] =
                inside ? x[(c * height + iy) * width + ix] : 0.0;
          }
}

void col2im(const double* col, int channels, int height, int width, int ksize, int stride,
            int pad, double* dx) {
  const int out_h = (height + 2 * pad - ksize) / stride + 1;
  const int out_w = (width + 2 * pad - ksize) / stride + 1;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < ksize; ++ky)
      for (int kx = 0; kx < ksize; ++kx)
        for (int oy = 0; oy < out_h; ++oy)
          for (int ox = 0; ox < out_w; ++ox) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < height && ix >= 0 && ix < width)
              dx[(c * height + iy) * width + ix] +=
                  col[((c * ksize + ky) * ksize + kx) * out_h * out_w + oy * out_w + ox];
          }
}

namespace {

// Returns the interpolated value and, through `scatter`, the taps it used.
template <typename Visit>
void bilinear(int height, int width, double y, double x, Visit&& visit) {
  if (y < -1.0 || y > height || x < -1.0 || x > width) return;
  if (y <= 0) y = 0;
  if (x <= 0) x = 0;
  int y0 = static_cast<int>(std::floor(y));
  int x0 = static_cast<int>(std::floor(x));
  int y1 = y0 + 1;
  int x1 = x0 + 1;
  if (y0 >= height - 1) {
    y0 = y1 = height - 1;
    y = y0;
  }
  if (x0 >= width - 1) {
    x0 = x1 = width - 1;
    x = x0;
  }
  const double ly = y - y0;
  const double lx = x - x0;
  visit(y0, x0, (1 - ly) * (1 - lx));
  visit(y0, x1, (1 - ly) * lx);
  visit(y1, x0, ly * (1 - lx));
  visit(y1, x1, ly * lx);
}

template <typename Visit>
void for_each_sample(const double* box, const RoiAlignParams& p, int ph, int pw, Visit&& visit) {
  const double off = p.aligned ? 0.5 : 0.0;
  const double x1 = box[0] * p.spatial_scale - off;
  const double y1 = box[1] * p.spatial_scale - off;
  const double rw = std::max(box[2] * p.spatial_scale - off - x1, 1e-3);
  const double rh = std::max(box[3] * p.spatial_scale - off - y1, 1e-3);
  const int gw = p.sampling_ratio > 0 ? p.sampling_ratio
                                      : std::max(1, static_cast<int>(std::ceil(rw / p.pooled_w)));
  const int gh = p.sampling_ratio > 0 ? p.sampling_ratio
                                      : std::max(1, static_cast<int>(std::ceil(rh / p.pooled_h)));
  const double bw = rw / p.pooled_w;
  const double bh = rh / p.pooled_h;
  for (int iy = 0; iy < gh; ++iy)
    for (int ix = 0; ix < gw; ++ix)
      visit(y1 + ph * bh + (iy + 0.5) * bh / gh, x1 + pw * bw + (ix + 0.5) * bw / gw, gh * gw);
}

}  // namespace

void roi_align_forward(const double* feature, int channels, int height, int width,
                       std::span<const double> boxes, const RoiAlignParams& p, double* out) {
  const int rois = static_cast<int>(boxes.size() / 4);
  for (int r = 0; r < rois; ++r)
    for (int c = 0; c < channels; ++c)
      for (int ph = 0; ph < p.pooled_h; ++ph)
        for (int pw = 0; pw < p.pooled_w; ++pw) {
          double acc = 0.0;
          int count = 1;
          for_each_sample(boxes.data() + 4 * r, p, ph, pw, [&](double y, double x, int n) {
            count = n;
            bilinear(height, width, y, x, [&](int yy, int xx, double w) {
              acc += w * feature[(c * height + yy) * width + xx];
            });
          });
          out[((r * channels + c) * p.pooled_h + ph) * p.pooled_w + pw] = acc / count;
        }
}

void roi_align_backward(const double* dout, int channels, int height, int width,
                        std::span<const double> boxes, const RoiAlignParams& p, double* dfeature) {
  const int rois = static_cast<int>(boxes.size() / 4);
  for (int r = 0; r < rois; ++r)
    for (int c = 0; c < channels; ++c)
      for (int ph = 0; ph < p.pooled_h; ++ph)
        for (int pw = 0; pw < p.pooled_w; ++pw) {
          const double g = dout[((r * channels + c) * p.pooled_h + ph) * p.pooled_w + pw];
          for_each_sample(boxes.data() + 4 * r, p, ph, pw, [&](double y, double x, int n) {
            bilinear(height, width, y, x, [&](int yy, int xx, double w) {
              dfeature[(c * height + yy) * width + xx] += w * g / n;
            });
          });
        }
}

void attention_forward(const AttentionLayout& layout, const double* qkv, double* out,
                       std::vector<double>& probs) {
  const int dim = layout.dim;
  const int dh = dim / layout.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  probs.clear();
  for (const auto& win : layout.windows) {
    const int n = static_cast<int>(win.size());
    for (int h = 0; h < layout.heads; ++h) {
      for (int i = 0; i < n; ++i) {
        std::vector<double> s(n);
        for (int j = 0; j < n; ++j) {
          double dot = 0.0;
          for (int d = 0; d < dh; ++d)
            dot += qkv[win[i] * 3 * dim + h * dh + d] * qkv[win[j] * 3 * dim + dim + h * dh + d];
          s[j] = dot * scale;
        }
        const double mx = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (double& v : s) z += (v = std::exp(v - mx));
        for (double& v : s) v /= z;
        for (int d = 0; d < dh; ++d) {
          double o = 0.0;
          for (int j = 0; j < n; ++j) o += s[j] * qkv[win[j] * 3 * dim + 2 * dim + h * dh + d];
          out[win[i] * dim + h * dh + d] = o;
        }
        probs.insert(probs.end(), s.begin(), s.end());
      }
    }
  }
}

void attention_backward(const AttentionLayout& layout, const double* qkv,
                        const std::vector<double>& probs, const double* dout, double* dqkv) {
  const int dim = layout.dim;
  const int dh = dim / layout.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::size_t off = 0;
  for (const auto& win : layout.windows) {
    const int n = static_cast<int>(win.size());
    for (int h = 0; h < layout.heads; ++h) {
      const double* p = probs.data() + off;
      off += static_cast<std::size_t>(n) * n;
      auto q = [&](int i, int d) { return qkv[win[i] * 3 * dim + h * dh + d]; };
      auto k = [&](int i, int d) { return qkv[win[i] * 3 * dim + dim + h * dh + d]; };
      auto v = [&](int i, int d) { return qkv[win[i] * 3 * dim + 2 * dim + h * dh + d]; };
      auto g = [&](int i, int d) { return dout[win[i] * dim + h * dh + d]; };
      for (int i = 0; i < n; ++i) {
        // dP_ij = g_i . v_j ; dS_ij = P_ij (dP_ij - sum_k P_ik dP_ik)
        std::vector<double> dp(n);
        double dot = 0.0;
        for (int j = 0; j < n; ++j) {
          for (int d = 0; d < dh; ++d) dp[j] += g(i, d) * v(j, d);
          dot += p[i * n + j] * dp[j];
        }
        for (int j = 0; j < n; ++j) {
          const double ds = p[i * n + j] * (dp[j] - dot) * scale;
          for (int d = 0; d < dh; ++d) {
            dqkv[win[i] * 3 * dim + h * dh + d] += ds * k(j, d);
            dqkv[win[j] * 3 * dim + dim + h * dh + d] += ds * q(i, d);
            dqkv[win[j] * 3 * dim + 2 * dim + h * dh + d] += p[i * n + j] * g(i, d);
          }
        }
      }
    }
  }
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta, int rows,
                        int dim, double eps, double* y, double* mean, double* rstd) {
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int d = 0; d < dim; ++d) mu += x[r * dim + d];
    mu /= dim;
    double var = 0.0;
    for (int d = 0; d < dim; ++d) var += (x[r * dim + d] - mu) * (x[r * dim + d] - mu);
    var /= dim;
    mean[r] = mu;
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (int d = 0; d < dim; ++d)
      y[r * dim + d] = (x[r * dim + d] - mu) * rstd[r] * gamma[d] + beta[d];
  }
}

void layer_norm_backward(const double* x, const double* gamma, const double* mean,
                         const double* rstd, const double* dy, int rows, int dim, double* dx,
                         double* dgamma, double* dbeta) {
  for (int r = 0; r < rows; ++r) {
    double s1 = 0.0;
    double s2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double xhat = (x[r * dim + d] - mean[r]) * rstd[r];
      s1 += dy[r * dim + d] * gamma[d];
      s2 += dy[r * dim + d] * gamma[d] * xhat;
      dgamma[d] += dy[r * dim + d] * xhat;
      dbeta[d] += dy[r * dim + d];
    }
    for (int d = 0; d < dim; ++d) {
      const double xhat = (x[r * dim + d] - mean[r]) * rstd[r];
      dx[r * dim + d] += rstd[r] * (dy[r * dim + d] * gamma[d] - s1 / dim - xhat * s2 / dim);
    }
  }
}

void resize_bilinear_u8(const std::uint8_t* src, int src_h, int src_w, int channels,
                        std::uint8_t* dst, int dst_h, int dst_w) {
  for (int y = 0; y < dst_h; ++y)
    for (int x = 0; x < dst_w; ++x) {
      const double sy = std::clamp((y + 0.5) * src_h / dst_h - 0.5, 0.0, src_h - 1.0);
      const double sx = std::clamp((x + 0.5) * src_w / dst_w - 0.5, 0.0, src_w - 1.0);
      const int y0 = static_cast<int>(sy);
      const int x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, src_h - 1);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wy = sy - y0;
      const double wx = sx - x0;
      for (int c = 0; c < channels; ++c) {
        auto at = [&](int yy, int xx) { return double(src[(yy * src_w + xx) * channels + c]); };
        const double top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * wx;
        const double bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * wx;
        const double v = top + (bot - top) * wy;
        dst[(y * dst_w + x) * channels + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
}

}  // namespace plainseg::kernels::ref
