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

#include "plainseg/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

namespace plainseg::kernels {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c[i * ldc + j] = beta == 0.0 ? 0.0 : beta * c[i * ldc + j];
    return;
  }
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void im2col(const double* x, int channels, int height, int width, int ksize, int stride, int pad,
            double* col) {
  const int out_h = (height + 2 * pad - ksize) / stride + 1;
  const int out_w = (width + 2 * pad - ksize) / stride + 1;
  const int plane = out_h * out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx) {
        double* row = col + (static_cast<std::size_t>(c) * ksize * ksize + ky * ksize + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < width) ? xc[iy * width + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int channels, int height, int width, int ksize, int stride,
            int pad, double* dx) {
  const int out_h = (height + 2 * pad - ksize) / stride + 1;
  const int out_w = (width + 2 * pad - ksize) / stride + 1;
  const int plane = out_h * out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double* xc = dx + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx) {
        const double* row =
            col + (static_cast<std::size_t>(c) * ksize * ksize + ky * ksize + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) xc[iy * width + ix] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

namespace {

struct SamplePoint {
  int idx[4];
  double w[4];
};

// Bilinear taps for one sampling location; zero weights when outside.
SamplePoint bilinear_taps(int height, int width, double y, double x) {
  SamplePoint s{{0, 0, 0, 0}, {0.0, 0.0, 0.0, 0.0}};
  if (y < -1.0 || y > height || x < -1.0 || x > width) return s;
  y = std::max(y, 0.0);
  x = std::max(x, 0.0);
  int y_low = static_cast<int>(y);
  int x_low = static_cast<int>(x);
  int y_high;
  int x_high;
  if (y_low >= height - 1) {
    y_high = y_low = height - 1;
    y = y_low;
  } else {
    y_high = y_low + 1;
  }
  if (x_low >= width - 1) {
    x_high = x_low = width - 1;
    x = x_low;
  } else {
    x_high = x_low + 1;
  }
  const double ly = y - y_low;
  const double lx = x - x_low;
  const double hy = 1.0 - ly;
  const double hx = 1.0 - lx;
  s.idx[0] = y_low * width + x_low;
  s.idx[1] = y_low * width + x_high;
  s.idx[2] = y_high * width + x_low;
  s.idx[3] = y_high * width + x_high;
  s.w[0] = hy * hx;
  s.w[1] = hy * lx;
  s.w[2] = ly * hx;
  s.w[3] = ly * lx;
  return s;
}

struct RoiGeometry {
  double start_x, start_y, bin_w, bin_h;
  int grid_w, grid_h;
};

RoiGeometry roi_geometry(const double* box, const RoiAlignParams& p) {
  const double offset = p.aligned ? 0.5 : 0.0;
  RoiGeometry g{};
  g.start_x = box[0] * p.spatial_scale - offset;
  g.start_y = box[1] * p.spatial_scale - offset;
  const double end_x = box[2] * p.spatial_scale - offset;
  const double end_y = box[3] * p.spatial_scale - offset;
  const double roi_w = std::max(end_x - g.start_x, 1e-3);
  const double roi_h = std::max(end_y - g.start_y, 1e-3);
  g.bin_w = roi_w / p.pooled_w;
  g.bin_h = roi_h / p.pooled_h;
  g.grid_w = p.sampling_ratio > 0 ? p.sampling_ratio
                                  : std::max(1, static_cast<int>(std::ceil(roi_w / p.pooled_w)));
  g.grid_h = p.sampling_ratio > 0 ? p.sampling_ratio
                                  : std::max(1, static_cast<int>(std::ceil(roi_h / p.pooled_h)));
  return g;
}

// Taps for every (bin, sample) of one RoI, bin-major.
std::vector<SamplePoint> roi_taps(int height, int width, const RoiGeometry& g,
                                  const RoiAlignParams& p) {
  std::vector<SamplePoint> taps;
  taps.reserve(static_cast<std::size_t>(p.pooled_h) * p.pooled_w * g.grid_h * g.grid_w);
  for (int ph = 0; ph < p.pooled_h; ++ph) {
    for (int pw = 0; pw < p.pooled_w; ++pw) {
      for (int iy = 0; iy < g.grid_h; ++iy) {
        const double y = g.start_y + ph * g.bin_h + (iy + 0.5) * g.bin_h / g.grid_h;
        for (int ix = 0; ix < g.grid_w; ++ix) {
          const double x = g.start_x + pw * g.bin_w + (ix + 0.5) * g.bin_w / g.grid_w;
          taps.push_back(bilinear_taps(height, width, y, x));
        }
      }
    }
  }
  return taps;
}

}  // namespace

void roi_align_forward(const double* feature, int channels, int height, int width,
                       std::span<const double> boxes, const RoiAlignParams& p, double* out) {
  const int rois = static_cast<int>(boxes.size() / 4);
  const int bins = p.pooled_h * p.pooled_w;
  for (int r = 0; r < rois; ++r) {
    const RoiGeometry g = roi_geometry(boxes.data() + 4 * r, p);
    const std::vector<SamplePoint> taps = roi_taps(height, width, g, p);
    const int per_bin = g.grid_h * g.grid_w;
    const double inv_count = 1.0 / per_bin;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
      const double* fc = feature + static_cast<std::size_t>(c) * height * width;
      double* oc = out + (static_cast<std::size_t>(r) * channels + c) * bins;
      for (int b = 0; b < bins; ++b) {
        double acc = 0.0;
        const SamplePoint* t = taps.data() + static_cast<std::size_t>(b) * per_bin;
        for (int s = 0; s < per_bin; ++s) {
          acc += t[s].w[0] * fc[t[s].idx[0]] + t[s].w[1] * fc[t[s].idx[1]] +
                 t[s].w[2] * fc[t[s].idx[2]] + t[s].w[3] * fc[t[s].idx[3]];
        }
        oc[b] = acc * inv_count;
      }
    }
  }
}

void roi_align_backward(const double* dout, int channels, int height, int width,
                        std::span<const double> boxes, const RoiAlignParams& p, double* dfeature) {
  const int rois = static_cast<int>(boxes.size() / 4);
  const int bins = p.pooled_h * p.pooled_w;
  for (int r = 0; r < rois; ++r) {
    const RoiGeometry g = roi_geometry(boxes.data() + 4 * r, p);
    const std::vector<SamplePoint> taps = roi_taps(height, width, g, p);
    const int per_bin = g.grid_h * g.grid_w;
    const double inv_count = 1.0 / per_bin;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
      double* fc = dfeature + static_cast<std::size_t>(c) * height * width;
      const double* oc = dout + (static_cast<std::size_t>(r) * channels + c) * bins;
      for (int b = 0; b < bins; ++b) {
        const double gv = oc[b] * inv_count;
        const SamplePoint* t = taps.data() + static_cast<std::size_t>(b) * per_bin;
        for (int s = 0; s < per_bin; ++s) {
          for (int q = 0; q < 4; ++q) fc[t[s].idx[q]] += t[s].w[q] * gv;
        }
      }
    }
  }
}

std::size_t attention_probs_size(const AttentionLayout& layout) {
  std::size_t total = 0;
  for (const auto& w : layout.windows) total += w.size() * w.size();
  return total * static_cast<std::size_t>(layout.heads);
}

namespace {

std::vector<std::size_t> probs_offsets(const AttentionLayout& layout) {
  std::vector<std::size_t> offsets(layout.windows.size() * layout.heads);
  std::size_t acc = 0;
  for (std::size_t w = 0; w < layout.windows.size(); ++w) {
    const std::size_t n = layout.windows[w].size();
    for (int h = 0; h < layout.heads; ++h) {
      offsets[w * layout.heads + h] = acc;
      acc += n * n;
    }
  }
  return offsets;
}

}  // namespace

void attention_forward(const AttentionLayout& layout, const double* qkv, double* out,
                       std::vector<double>& probs) {
  const int dim = layout.dim;
  const int heads = layout.heads;
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int stride = 3 * dim;
  probs.assign(attention_probs_size(layout), 0.0);
  const std::vector<std::size_t> offsets = probs_offsets(layout);
  const int jobs = static_cast<int>(layout.windows.size()) * heads;

#pragma omp parallel for schedule(dynamic)
  for (int job = 0; job < jobs; ++job) {
    const auto& win = layout.windows[job / heads];
    const int h = job % heads;
    const int n = static_cast<int>(win.size());
    std::vector<double> q(static_cast<std::size_t>(n) * dh), k(q.size()), v(q.size());
    for (int i = 0; i < n; ++i) {
      const double* row = qkv + static_cast<std::size_t>(win[i]) * stride + h * dh;
      std::copy(row, row + dh, q.begin() + i * dh);
      std::copy(row + dim, row + dim + dh, k.begin() + i * dh);
      std::copy(row + 2 * dim, row + 2 * dim + dh, v.begin() + i * dh);
    }
    double* p = probs.data() + offsets[job];
    for (int i = 0; i < n; ++i) {
      double* pi = p + static_cast<std::size_t>(i) * n;
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int d = 0; d < dh; ++d) s += q[i * dh + d] * k[j * dh + d];
        pi[j] = s * scale;
        mx = std::max(mx, pi[j]);
      }
      double z = 0.0;
      for (int j = 0; j < n; ++j) {
        pi[j] = std::exp(pi[j] - mx);
        z += pi[j];
      }
      const double inv = 1.0 / z;
      for (int j = 0; j < n; ++j) pi[j] *= inv;
      double* o = out + static_cast<std::size_t>(win[i]) * dim + h * dh;
      std::fill(o, o + dh, 0.0);
      for (int j = 0; j < n; ++j) {
        const double pij = pi[j];
        for (int d = 0; d < dh; ++d) o[d] += pij * v[j * dh + d];
      }
    }
  }
}

void attention_backward(const AttentionLayout& layout, const double* qkv,
                        const std::vector<double>& probs, const double* dout, double* dqkv) {
  const int dim = layout.dim;
  const int heads = layout.heads;
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int stride = 3 * dim;
  const std::vector<std::size_t> offsets = probs_offsets(layout);
  const int jobs = static_cast<int>(layout.windows.size()) * heads;

#pragma omp parallel for schedule(dynamic)
  for (int job = 0; job < jobs; ++job) {
    const auto& win = layout.windows[job / heads];
    const int h = job % heads;
    const int n = static_cast<int>(win.size());
    std::vector<double> q(static_cast<std::size_t>(n) * dh), k(q.size()), v(q.size()),
        go(q.size()), dq(q.size(), 0.0), dk(q.size(), 0.0), dv(q.size(), 0.0), ds(n);
    for (int i = 0; i < n; ++i) {
      const double* row = qkv + static_cast<std::size_t>(win[i]) * stride + h * dh;
      std::copy(row, row + dh, q.begin() + i * dh);
      std::copy(row + dim, row + dim + dh, k.begin() + i * dh);
      std::copy(row + 2 * dim, row + 2 * dim + dh, v.begin() + i * dh);
      const double* g = dout + static_cast<std::size_t>(win[i]) * dim + h * dh;
      std::copy(g, g + dh, go.begin() + i * dh);
    }
    const double* p = probs.data() + offsets[job];
    for (int i = 0; i < n; ++i) {
      const double* pi = p + static_cast<std::size_t>(i) * n;
      const double* gi = go.data() + i * dh;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) {
        double dp = 0.0;
        for (int d = 0; d < dh; ++d) dp += gi[d] * v[j * dh + d];
        ds[j] = dp;
        dot += dp * pi[j];
        for (int d = 0; d < dh; ++d) dv[j * dh + d] += pi[j] * gi[d];
      }
      for (int j = 0; j < n; ++j) {
        const double s = pi[j] * (ds[j] - dot) * scale;
        if (s == 0.0) continue;
        for (int d = 0; d < dh; ++d) {
          dq[i * dh + d] += s * k[j * dh + d];
          dk[j * dh + d] += s * q[i * dh + d];
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      double* row = dqkv + static_cast<std::size_t>(win[i]) * stride + h * dh;
      for (int d = 0; d < dh; ++d) {
        row[d] += dq[i * dh + d];
        row[dim + d] += dk[i * dh + d];
        row[2 * dim + d] += dv[i * dh + d];
      }
    }
  }
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta, int rows,
                        int dim, double eps, double* y, double* mean, double* rstd) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * dim;
    double mu = 0.0;
    for (int d = 0; d < dim; ++d) mu += xr[d];
    mu /= dim;
    double var = 0.0;
    for (int d = 0; d < dim; ++d) var += (xr[d] - mu) * (xr[d] - mu);
    var /= dim;
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    double* yr = y + static_cast<std::size_t>(r) * dim;
    for (int d = 0; d < dim; ++d) yr[d] = (xr[d] - mu) * rs * gamma[d] + beta[d];
  }
}

void layer_norm_backward(const double* x, const double* gamma, const double* mean,
                         const double* rstd, const double* dy, int rows, int dim, double* dx,
                         double* dgamma, double* dbeta) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * dim;
    const double* gr = dy + static_cast<std::size_t>(r) * dim;
    double s1 = 0.0;
    double s2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double xhat = (xr[d] - mean[r]) * rstd[r];
      const double g = gr[d] * gamma[d];
      s1 += g;
      s2 += g * xhat;
    }
    s1 /= dim;
    s2 /= dim;
    double* dr = dx + static_cast<std::size_t>(r) * dim;
    for (int d = 0; d < dim; ++d) {
      const double xhat = (xr[d] - mean[r]) * rstd[r];
      dr[d] += rstd[r] * (gr[d] * gamma[d] - s1 - xhat * s2);
    }
  }
#pragma omp parallel for schedule(static)
  for (int d = 0; d < dim; ++d) {
    double g = 0.0;
    double b = 0.0;
    for (int r = 0; r < rows; ++r) {
      const std::size_t i = static_cast<std::size_t>(r) * dim + d;
      g += dy[i] * (x[i] - mean[r]) * rstd[r];
      b += dy[i];
    }
    dgamma[d] += g;
    dbeta[d] += b;
  }
}

void resize_bilinear_u8(const std::uint8_t* src, int src_h, int src_w, int channels,
                        std::uint8_t* dst, int dst_h, int dst_w) {
  std::vector<int> x0(dst_w), x1(dst_w);
  std::vector<double> wx(dst_w);
  for (int x = 0; x < dst_w; ++x) {
    const double sx = std::clamp((x + 0.5) * src_w / dst_w - 0.5, 0.0, src_w - 1.0);
    x0[x] = static_cast<int>(sx);
    x1[x] = std::min(x0[x] + 1, src_w - 1);
    wx[x] = sx - x0[x];
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst_h; ++y) {
    const double sy = std::clamp((y + 0.5) * src_h / dst_h - 0.5, 0.0, src_h - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = sy - y0;
    for (int x = 0; x < dst_w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const double a = src[(static_cast<std::size_t>(y0) * src_w + x0[x]) * channels + c];
        const double b = src[(static_cast<std::size_t>(y0) * src_w + x1[x]) * channels + c];
        const double cc = src[(static_cast<std::size_t>(y1) * src_w + x0[x]) * channels + c];
        const double d = src[(static_cast<std::size_t>(y1) * src_w + x1[x]) * channels + c];
        const double top = a + (b - a) * wx[x];
        const double bot = cc + (d - cc) * wx[x];
        const double v = top + (bot - top) * wy;
        dst[(static_cast<std::size_t>(y) * dst_w + x) * channels + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

}  // namespace plainseg::kernels
