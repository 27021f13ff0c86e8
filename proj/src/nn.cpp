// Copyright (c) 2026 The ammnet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ammnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ammnet {

namespace {

// Integer division helpers that round toward -inf / +inf for negative
// numerators (b must be positive). Needed for valid-output-range bounds.
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// Uniform bound scaled by incoming connection count, so pre-activation
// variance stays roughly constant across layers at init.
double fan_in_bound(std::int64_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

}  // namespace

void zero_grads(const ParamList& params) {
  for (const ParamRef& p : params) p.grad->zero();
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  double* p = y.data();
  const std::int64_t n = y.size();
  for (std::int64_t i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
  AMM_CHECK(y.same_shape(gy), ErrCode::kShapeMismatch,
            "relu backward shapes differ: " << y.shape_str() << " vs " << gy.shape_str());
  Tensor gx = gy;
  const double* yp = y.data();
  double* gp = gx.data();
  const std::int64_t n = gx.size();
  for (std::int64_t i = 0; i < n; ++i) {
    if (yp[i] <= 0.0) gp[i] = 0.0;
  }
  return gx;
}

Tensor softmax_channels(const Tensor& logits) {
  AMM_CHECK(logits.rank() >= 2, ErrCode::kShapeMismatch,
            "softmax needs a (channels, ...) tensor, got rank " << logits.rank());
  const int channels = logits.dim(0);
  const std::int64_t sites = logits.size() / channels;
  Tensor probs = logits;
  double* p = probs.data();
  for (std::int64_t s = 0; s < sites; ++s) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < channels; ++c) max_v = std::max(max_v, p[c * sites + s]);
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      const double e = std::exp(p[c * sites + s] - max_v);
      p[c * sites + s] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < channels; ++c) p[c * sites + s] *= inv;
  }
  return probs;
}

Tensor softmax_channels_backward(const Tensor& probs, const Tensor& grad_probs) {
  AMM_CHECK(probs.same_shape(grad_probs), ErrCode::kShapeMismatch,
            "softmax backward shapes differ");
  const int channels = probs.dim(0);
  const std::int64_t sites = probs.size() / channels;
  Tensor gx = probs;  // reuse shape
  const double* pp = probs.data();
  const double* gp = grad_probs.data();
  double* xp = gx.data();
  for (std::int64_t s = 0; s < sites; ++s) {
    double dot = 0.0;
    for (int c = 0; c < channels; ++c) dot += pp[c * sites + s] * gp[c * sites + s];
    for (int c = 0; c < channels; ++c) {
      xp[c * sites + s] = pp[c * sites + s] * (gp[c * sites + s] - dot);
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
      stride_(stride), pad_(pad) {
  AMM_CHECK(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && pad >= 0,
            ErrCode::kInvalidArgument, "bad Conv2d geometry for " << name_);
  w = Tensor({out_ch, in_ch, kernel, kernel});
  b = Tensor({out_ch});
  gw = Tensor({out_ch, in_ch, kernel, kernel});
  gb = Tensor({out_ch});
}

void Conv2d::init(std::mt19937_64& rng) {
  const double bound = fan_in_bound(static_cast<std::int64_t>(in_ch_) * kernel_ * kernel_);
  fill_uniform(w, rng, -bound, bound);
  b.zero();
}

void Conv2d::collect(ParamList& out) {
  out.push_back({name_ + "/w", &w, &gw});
  out.push_back({name_ + "/b", &b, &gb});
}

Tensor Conv2d::forward(const Tensor& x) const {
  AMM_CHECK(x.rank() == 3 && x.dim(0) == in_ch_, ErrCode::kShapeMismatch,
            name_ << " expects (" << in_ch_ << ", h, w) input, got " << x.shape_str());
  const int H = x.dim(1), W = x.dim(2);
  const int Ho = (H + 2 * pad_ - kernel_) / stride_ + 1;
  const int Wo = (W + 2 * pad_ - kernel_) / stride_ + 1;
  AMM_CHECK(Ho > 0 && Wo > 0, ErrCode::kShapeMismatch,
            name_ << " output collapses for input " << x.shape_str());

  Tensor y({out_ch_, Ho, Wo});
  for (int oc = 0; oc < out_ch_; ++oc) {
    const double bias = b[oc];
    double* yplane = y.data() + static_cast<std::int64_t>(oc) * Ho * Wo;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) yplane[i] = bias;
  }

  for (int oc = 0; oc < out_ch_; ++oc) {
    for (int ic = 0; ic < in_ch_; ++ic) {
      const double* xplane = x.data() + static_cast<std::int64_t>(ic) * H * W;
      for (int kr = 0; kr < kernel_; ++kr) {
        const int r_off = kr - pad_;
        const int oy_lo = std::max(0, ceil_div(-r_off, stride_));
        const int oy_hi = std::min(Ho - 1, floor_div(H - 1 - r_off, stride_));
        for (int kc = 0; kc < kernel_; ++kc) {
          const double wv = w.at(oc, ic, kr, kc);
          if (wv == 0.0) continue;
          const int c_off = kc - pad_;
          const int ox_lo = std::max(0, ceil_div(-c_off, stride_));
          const int ox_hi = std::min(Wo - 1, floor_div(W - 1 - c_off, stride_));
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const double* xrow = xplane + static_cast<std::int64_t>(oy * stride_ + r_off) * W;
            double* yrow = y.data() + (static_cast<std::int64_t>(oc) * Ho + oy) * Wo;
            if (stride_ == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += wv * xrow[ox + c_off];
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                yrow[ox] += wv * xrow[ox * stride_ + c_off];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy) {
  const int H = x.dim(1), W = x.dim(2);
  const int Ho = gy.dim(1), Wo = gy.dim(2);
  AMM_CHECK(gy.rank() == 3 && gy.dim(0) == out_ch_, ErrCode::kShapeMismatch,
            name_ << " got gradient " << gy.shape_str());

  Tensor gx({in_ch_, H, W});
  for (int oc = 0; oc < out_ch_; ++oc) {
    const double* gplane = gy.data() + static_cast<std::int64_t>(oc) * Ho * Wo;
    double acc = 0.0;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) acc += gplane[i];
    gb[oc] += acc;

    for (int ic = 0; ic < in_ch_; ++ic) {
      const double* xplane = x.data() + static_cast<std::int64_t>(ic) * H * W;
      double* gxplane = gx.data() + static_cast<std::int64_t>(ic) * H * W;
      for (int kr = 0; kr < kernel_; ++kr) {
        const int r_off = kr - pad_;
        const int oy_lo = std::max(0, ceil_div(-r_off, stride_));
        const int oy_hi = std::min(Ho - 1, floor_div(H - 1 - r_off, stride_));
        for (int kc = 0; kc < kernel_; ++kc) {
          const double wv = w.at(oc, ic, kr, kc);
          const int c_off = kc - pad_;
          const int ox_lo = std::max(0, ceil_div(-c_off, stride_));
          const int ox_hi = std::min(Wo - 1, floor_div(W - 1 - c_off, stride_));
          double wacc = 0.0;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const double* xrow = xplane + static_cast<std::int64_t>(oy * stride_ + r_off) * W;
            double* gxrow = gxplane + static_cast<std::int64_t>(oy * stride_ + r_off) * W;
            const double* grow = gplane + static_cast<std::int64_t>(oy) * Wo;
            if (stride_ == 1) {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                wacc += xrow[ox + c_off] * grow[ox];
                gxrow[ox + c_off] += wv * grow[ox];
              }
            } else {
              for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                wacc += xrow[ox * stride_ + c_off] * grow[ox];
                gxrow[ox * stride_ + c_off] += wv * grow[ox];
              }
            }
          }
          gw.at(oc, ic, kr, kc) += wacc;
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(std::string name, int in_ch, int out_ch, std::array<int, 3> kernel,
               std::array<int, 3> stride, std::array<int, 3> pad, std::array<int, 3> dilation)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
      stride_(stride), pad_(pad), dilation_(dilation) {
  AMM_CHECK(in_ch > 0 && out_ch > 0, ErrCode::kInvalidArgument,
            "bad Conv3d channels for " << name_);
  for (int a = 0; a < 3; ++a) {
    AMM_CHECK(kernel_[a] > 0 && stride_[a] > 0 && pad_[a] >= 0 && dilation_[a] > 0,
              ErrCode::kInvalidArgument, "bad Conv3d geometry for " << name_);
  }
  const int ksize = kernel_[0] * kernel_[1] * kernel_[2];
  w = Tensor({out_ch, in_ch * ksize});
  b = Tensor({out_ch});
  gw = Tensor({out_ch, in_ch * ksize});
  gb = Tensor({out_ch});
}

Conv3d Conv3d::cube(std::string name, int in_ch, int out_ch, int k, int s, int p) {
  return Conv3d(std::move(name), in_ch, out_ch, {k, k, k}, {s, s, s}, {p, p, p});
}

Conv3d Conv3d::pointwise(std::string name, int in_ch, int out_ch) {
  return Conv3d(std::move(name), in_ch, out_ch, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
}

void Conv3d::init(std::mt19937_64& rng) {
  const double bound = fan_in_bound(static_cast<std::int64_t>(in_ch_) * kernel_[0] * kernel_[1] *
                                    kernel_[2]);
  fill_uniform(w, rng, -bound, bound);
  b.zero();
}

void Conv3d::collect(ParamList& out) {
  out.push_back({name_ + "/w", &w, &gw});
  out.push_back({name_ + "/b", &b, &gb});
}

std::array<int, 3> Conv3d::out_dims(const std::array<int, 3>& in) const {
  std::array<int, 3> out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (in[a] + 2 * pad_[a] - dilation_[a] * (kernel_[a] - 1) - 1) / stride_[a] + 1;
    AMM_CHECK(out[a] > 0, ErrCode::kShapeMismatch,
              name_ << " output collapses on axis " << a << " for input dim " << in[a]);
  }
  return out;
}

Tensor Conv3d::forward(const Tensor& x) const {
  AMM_CHECK(x.rank() == 4 && x.dim(0) == in_ch_, ErrCode::kShapeMismatch,
            name_ << " expects (" << in_ch_ << ", x, y, z) input, got " << x.shape_str());
  const std::array<int, 3> in{x.dim(1), x.dim(2), x.dim(3)};
  const std::array<int, 3> od = out_dims(in);
  const int X = in[0], Y = in[1], Z = in[2];
  const int Xo = od[0], Yo = od[1], Zo = od[2];
  const std::int64_t ovol = static_cast<std::int64_t>(Xo) * Yo * Zo;

  Tensor y({out_ch_, Xo, Yo, Zo});
  for (int oc = 0; oc < out_ch_; ++oc) {
    const double bias = b[oc];
    double* yp = y.data() + oc * ovol;
    for (std::int64_t i = 0; i < ovol; ++i) yp[i] = bias;
  }

  const int ksize = kernel_[0] * kernel_[1] * kernel_[2];
  const int kn = kernel_[2];
  const int sz = stride_[2];
  // Per z tap: its input offset and the output range where it stays in
  // bounds. These depend only on geometry, so they are shared by every row;
  // the interior range [lo_all, hi_all] is where all taps are valid at once.
  std::vector<int> zoff(kn), zlo(kn), zhi(kn);
  int lo_all = 0, hi_all = Zo - 1;
  for (int kz = 0; kz < kn; ++kz) {
    zoff[kz] = kz * dilation_[2] - pad_[2];
    zlo[kz] = std::max(0, ceil_div(-zoff[kz], sz));
    zhi[kz] = std::min(Zo - 1, floor_div(Z - 1 - zoff[kz], sz));
    lo_all = std::max(lo_all, zlo[kz]);
    hi_all = std::min(hi_all, zhi[kz]);
  }

  for (int oc = 0; oc < out_ch_; ++oc) {
    for (int ic = 0; ic < in_ch_; ++ic) {
      const double* xvol = x.data() + static_cast<std::int64_t>(ic) * X * Y * Z;
      const double* wbase = w.data() + (static_cast<std::int64_t>(oc) * in_ch_ + ic) * ksize;
      for (int kx = 0; kx < kernel_[0]; ++kx) {
        const int x_off = kx * dilation_[0] - pad_[0];
        const int ox_lo = std::max(0, ceil_div(-x_off, stride_[0]));
        const int ox_hi = std::min(Xo - 1, floor_div(X - 1 - x_off, stride_[0]));
        for (int ky = 0; ky < kernel_[1]; ++ky) {
          const int y_off = ky * dilation_[1] - pad_[1];
          const int oy_lo = std::max(0, ceil_div(-y_off, stride_[1]));
          const int oy_hi = std::min(Yo - 1, floor_div(Y - 1 - y_off, stride_[1]));
          const double* wrow = wbase + (static_cast<std::int64_t>(kx) * kernel_[1] + ky) * kernel_[2];
          for (int ox = ox_lo; ox <= ox_hi; ++ox) {
            const int ix = ox * stride_[0] + x_off;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * stride_[1] + y_off;
              const double* xrow = xvol + (static_cast<std::int64_t>(ix) * Y + iy) * Z;
              double* yrow = y.data() + ((static_cast<std::int64_t>(oc) * Xo + ox) * Yo + oy) * Zo;
              if (kn == 1) {
                const double wv = wrow[0];
                const int off = zoff[0];
                if (sz == 1) {
                  const double* xr = xrow + off;
                  for (int oz = zlo[0]; oz <= zhi[0]; ++oz) yrow[oz] += wv * xr[oz];
                } else {
                  for (int oz = zlo[0]; oz <= zhi[0]; ++oz) yrow[oz] += wv * xrow[oz * sz + off];
                }
                continue;
              }
              // All z taps in one pass over the output row. Edge elements,
              // where some tap falls outside the input, take the guarded
              // path; the interior runs without bounds checks.
              auto edge = [&](int from, int to) {
                for (int oz = from; oz <= to; ++oz) {
                  double acc = 0.0;
                  for (int kz = 0; kz < kn; ++kz) {
                    if (oz >= zlo[kz] && oz <= zhi[kz]) acc += wrow[kz] * xrow[oz * sz + zoff[kz]];
                  }
                  yrow[oz] += acc;
                }
              };
              if (lo_all > hi_all) {
                edge(0, Zo - 1);
                continue;
              }
              edge(0, lo_all - 1);
              if (kn == 3) {
                const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                const double* x0 = xrow + zoff[0];
                const double* x1 = xrow + zoff[1];
                const double* x2 = xrow + zoff[2];
                if (sz == 1) {
                  for (int oz = lo_all; oz <= hi_all; ++oz) {
                    yrow[oz] += w0 * x0[oz] + w1 * x1[oz] + w2 * x2[oz];
                  }
                } else {
                  for (int oz = lo_all; oz <= hi_all; ++oz) {
                    const std::int64_t iz = static_cast<std::int64_t>(oz) * sz;
                    yrow[oz] += w0 * x0[iz] + w1 * x1[iz] + w2 * x2[iz];
                  }
                }
              } else {
                for (int oz = lo_all; oz <= hi_all; ++oz) {
                  const double* xr = xrow + static_cast<std::int64_t>(oz) * sz;
                  double acc = 0.0;
                  for (int kz = 0; kz < kn; ++kz) acc += wrow[kz] * xr[zoff[kz]];
                  yrow[oz] += acc;
                }
              }
              edge(hi_all + 1, Zo - 1);
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& x, const Tensor& gy) {
  const std::array<int, 3> in{x.dim(1), x.dim(2), x.dim(3)};
  const std::array<int, 3> od = out_dims(in);
  AMM_CHECK(gy.rank() == 4 && gy.dim(0) == out_ch_ && gy.dim(1) == od[0] &&
                gy.dim(2) == od[1] && gy.dim(3) == od[2],
            ErrCode::kShapeMismatch, name_ << " got gradient " << gy.shape_str());
  const int X = in[0], Y = in[1], Z = in[2];
  const int Xo = od[0], Yo = od[1], Zo = od[2];
  const std::int64_t ovol = static_cast<std::int64_t>(Xo) * Yo * Zo;
  const int ksize = kernel_[0] * kernel_[1] * kernel_[2];

  const int kn = kernel_[2];
  const int sz = stride_[2];
  std::vector<int> zoff(kn), zlo(kn), zhi(kn);
  int lo_all = 0, hi_all = Zo - 1;
  for (int kz = 0; kz < kn; ++kz) {
    zoff[kz] = kz * dilation_[2] - pad_[2];
    zlo[kz] = std::max(0, ceil_div(-zoff[kz], sz));
    zhi[kz] = std::min(Zo - 1, floor_div(Z - 1 - zoff[kz], sz));
    lo_all = std::max(lo_all, zlo[kz]);
    hi_all = std::min(hi_all, zhi[kz]);
  }
  std::vector<double> wacc(kn);

  Tensor gx({in_ch_, X, Y, Z});
  for (int oc = 0; oc < out_ch_; ++oc) {
    const double* gvol = gy.data() + oc * ovol;
    double acc = 0.0;
    for (std::int64_t i = 0; i < ovol; ++i) acc += gvol[i];
    gb[oc] += acc;

    for (int ic = 0; ic < in_ch_; ++ic) {
      const double* xvol = x.data() + static_cast<std::int64_t>(ic) * X * Y * Z;
      double* gxvol = gx.data() + static_cast<std::int64_t>(ic) * X * Y * Z;
      const double* wbase = w.data() + (static_cast<std::int64_t>(oc) * in_ch_ + ic) * ksize;
      double* gwbase = gw.data() + (static_cast<std::int64_t>(oc) * in_ch_ + ic) * ksize;
      for (int kx = 0; kx < kernel_[0]; ++kx) {
        const int x_off = kx * dilation_[0] - pad_[0];
        const int ox_lo = std::max(0, ceil_div(-x_off, stride_[0]));
        const int ox_hi = std::min(Xo - 1, floor_div(X - 1 - x_off, stride_[0]));
        for (int ky = 0; ky < kernel_[1]; ++ky) {
          const int y_off = ky * dilation_[1] - pad_[1];
          const int oy_lo = std::max(0, ceil_div(-y_off, stride_[1]));
          const int oy_hi = std::min(Yo - 1, floor_div(Y - 1 - y_off, stride_[1]));
          const double* wrow = wbase + (static_cast<std::int64_t>(kx) * kernel_[1] + ky) * kernel_[2];
          double* gwrow = gwbase + (static_cast<std::int64_t>(kx) * kernel_[1] + ky) * kernel_[2];
          for (int ox = ox_lo; ox <= ox_hi; ++ox) {
            const int ix = ox * stride_[0] + x_off;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * stride_[1] + y_off;
              const double* xrow = xvol + (static_cast<std::int64_t>(ix) * Y + iy) * Z;
              double* gxrow = gxvol + (static_cast<std::int64_t>(ix) * Y + iy) * Z;
              const double* grow = gvol + (static_cast<std::int64_t>(ox) * Yo + oy) * Zo;
              if (kn == 1) {
                const double wv = wrow[0];
                const int off = zoff[0];
                double wa = 0.0;
                if (sz == 1) {
                  const double* xr = xrow + off;
                  double* gxr = gxrow + off;
                  for (int oz = zlo[0]; oz <= zhi[0]; ++oz) {
                    const double gv = grow[oz];
                    wa += xr[oz] * gv;
                    gxr[oz] += wv * gv;
                  }
                } else {
                  for (int oz = zlo[0]; oz <= zhi[0]; ++oz) {
                    const double gv = grow[oz];
                    wa += xrow[oz * sz + off] * gv;
                    gxrow[oz * sz + off] += wv * gv;
                  }
                }
                gwrow[0] += wa;
                continue;
              }
              // Mirror of the forward row pass: one sweep over the output
              // row feeds the input gradient and all per-tap weight sums.
              for (int kz = 0; kz < kn; ++kz) wacc[kz] = 0.0;
              auto edge = [&](int from, int to) {
                for (int oz = from; oz <= to; ++oz) {
                  const double gv = grow[oz];
                  if (gv == 0.0) continue;
                  for (int kz = 0; kz < kn; ++kz) {
                    if (oz >= zlo[kz] && oz <= zhi[kz]) {
                      wacc[kz] += xrow[oz * sz + zoff[kz]] * gv;
                      gxrow[oz * sz + zoff[kz]] += wrow[kz] * gv;
                    }
                  }
                }
              };
              if (lo_all > hi_all) {
                edge(0, Zo - 1);
              } else {
                edge(0, lo_all - 1);
                if (kn == 3) {
                  const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                  const int o0 = zoff[0], o1 = zoff[1], o2 = zoff[2];
                  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                  for (int oz = lo_all; oz <= hi_all; ++oz) {
                    const double gv = grow[oz];
                    if (gv == 0.0) continue;
                    const double* xr = xrow + static_cast<std::int64_t>(oz) * sz;
                    double* gxr = gxrow + static_cast<std::int64_t>(oz) * sz;
                    a0 += xr[o0] * gv;
                    a1 += xr[o1] * gv;
                    a2 += xr[o2] * gv;
                    gxr[o0] += w0 * gv;
                    gxr[o1] += w1 * gv;
                    gxr[o2] += w2 * gv;
                  }
                  wacc[0] += a0;
                  wacc[1] += a1;
                  wacc[2] += a2;
                } else {
                  for (int oz = lo_all; oz <= hi_all; ++oz) {
                    const double gv = grow[oz];
                    if (gv == 0.0) continue;
                    const double* xr = xrow + static_cast<std::int64_t>(oz) * sz;
                    double* gxr = gxrow + static_cast<std::int64_t>(oz) * sz;
                    for (int kz = 0; kz < kn; ++kz) {
                      wacc[kz] += xr[zoff[kz]] * gv;
                      gxr[zoff[kz]] += wrow[kz] * gv;
                    }
                  }
                }
                edge(hi_all + 1, Zo - 1);
              }
              for (int kz = 0; kz < kn; ++kz) gwrow[kz] += wacc[kz];
            }
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// ConvTranspose3d

ConvTranspose3d::ConvTranspose3d(std::string name, int in_ch, int out_ch, int kernel,
                                 int stride, int pad)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel),
      stride_(stride), pad_(pad) {
  AMM_CHECK(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && pad >= 0,
            ErrCode::kInvalidArgument, "bad ConvTranspose3d geometry for " << name_);
  const int ksize = kernel * kernel * kernel;
  w = Tensor({in_ch, out_ch, ksize});
  b = Tensor({out_ch});
  gw = Tensor({in_ch, out_ch, ksize});
  gb = Tensor({out_ch});
}

void ConvTranspose3d::init(std::mt19937_64& rng) {
  const double bound =
      fan_in_bound(static_cast<std::int64_t>(in_ch_) * kernel_ * kernel_ * kernel_);
  fill_uniform(w, rng, -bound, bound);
  b.zero();
}

void ConvTranspose3d::collect(ParamList& out) {
  out.push_back({name_ + "/w", &w, &gw});
  out.push_back({name_ + "/b", &b, &gb});
}

Tensor ConvTranspose3d::forward(const Tensor& x) const {
  AMM_CHECK(x.rank() == 4 && x.dim(0) == in_ch_, ErrCode::kShapeMismatch,
            name_ << " expects (" << in_ch_ << ", x, y, z) input, got " << x.shape_str());
  const int X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
  const int Xo = out_size(X), Yo = out_size(Y), Zo = out_size(Z);
  AMM_CHECK(Xo > 0 && Yo > 0 && Zo > 0, ErrCode::kShapeMismatch,
            name_ << " output collapses for input " << x.shape_str());
  const std::int64_t ovol = static_cast<std::int64_t>(Xo) * Yo * Zo;

  Tensor y({out_ch_, Xo, Yo, Zo});
  for (int oc = 0; oc < out_ch_; ++oc) {
    const double bias = b[oc];
    double* yp = y.data() + oc * ovol;
    for (std::int64_t i = 0; i < ovol; ++i) yp[i] = bias;
  }

  const int ksize = kernel_ * kernel_ * kernel_;
  // For a fixed input z the taps kz = 0..kernel-1 land on a contiguous run
  // of outputs starting at iz * stride - pad. Interior inputs, where the
  // whole run is in bounds, take the unguarded block write; a zero input
  // contributes nothing and is skipped outright (common after a ReLU).
  const int iz_lo = std::max(0, ceil_div(pad_, stride_));
  const int iz_hi = std::min(Z - 1, floor_div(Zo - kernel_ + pad_, stride_));
  for (int ic = 0; ic < in_ch_; ++ic) {
    const double* xvol = x.data() + static_cast<std::int64_t>(ic) * X * Y * Z;
    for (int oc = 0; oc < out_ch_; ++oc) {
      const double* wbase = w.data() + (static_cast<std::int64_t>(ic) * out_ch_ + oc) * ksize;
      double* yvol = y.data() + oc * ovol;
      for (int kx = 0; kx < kernel_; ++kx) {
        for (int ix = 0; ix < X; ++ix) {
          const int ox = ix * stride_ - pad_ + kx;
          if (ox < 0 || ox >= Xo) continue;
          for (int ky = 0; ky < kernel_; ++ky) {
            const double* wrow = wbase + (static_cast<std::int64_t>(kx) * kernel_ + ky) * kernel_;
            for (int iy = 0; iy < Y; ++iy) {
              const int oy = iy * stride_ - pad_ + ky;
              if (oy < 0 || oy >= Yo) continue;
              const double* xrow = xvol + (static_cast<std::int64_t>(ix) * Y + iy) * Z;
              double* yrow = yvol + (static_cast<std::int64_t>(ox) * Yo + oy) * Zo;
              auto edge = [&](int from, int to) {
                for (int iz = from; iz <= to; ++iz) {
                  const double xv = xrow[iz];
                  if (xv == 0.0) continue;
                  const int base = iz * stride_ - pad_;
                  const int k_lo = std::max(0, -base);
                  const int k_hi = std::min(kernel_ - 1, Zo - 1 - base);
                  double* yb = yrow + base;
                  for (int kz = k_lo; kz <= k_hi; ++kz) yb[kz] += wrow[kz] * xv;
                }
              };
              if (iz_lo > iz_hi) {
                edge(0, Z - 1);
                continue;
              }
              edge(0, iz_lo - 1);
              if (kernel_ == 4) {
                const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2], w3 = wrow[3];
                for (int iz = iz_lo; iz <= iz_hi; ++iz) {
                  const double xv = xrow[iz];
                  if (xv == 0.0) continue;
                  double* yb = yrow + (iz * stride_ - pad_);
                  yb[0] += w0 * xv;
                  yb[1] += w1 * xv;
                  yb[2] += w2 * xv;
                  yb[3] += w3 * xv;
                }
              } else {
                for (int iz = iz_lo; iz <= iz_hi; ++iz) {
                  const double xv = xrow[iz];
                  if (xv == 0.0) continue;
                  double* yb = yrow + (iz * stride_ - pad_);
                  for (int kz = 0; kz < kernel_; ++kz) yb[kz] += wrow[kz] * xv;
                }
              }
              edge(iz_hi + 1, Z - 1);
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor ConvTranspose3d::backward(const Tensor& x, const Tensor& gy) {
  const int X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
  const int Xo = out_size(X), Yo = out_size(Y), Zo = out_size(Z);
  AMM_CHECK(gy.rank() == 4 && gy.dim(0) == out_ch_ && gy.dim(1) == Xo && gy.dim(2) == Yo &&
                gy.dim(3) == Zo,
            ErrCode::kShapeMismatch, name_ << " got gradient " << gy.shape_str());
  const std::int64_t ovol = static_cast<std::int64_t>(Xo) * Yo * Zo;
  const int ksize = kernel_ * kernel_ * kernel_;

  for (int oc = 0; oc < out_ch_; ++oc) {
    const double* gvol = gy.data() + oc * ovol;
    double acc = 0.0;
    for (std::int64_t i = 0; i < ovol; ++i) acc += gvol[i];
    gb[oc] += acc;
  }

  // Same contiguous-run view as the forward pass: input iz reads the output
  // gradient block starting at iz * stride - pad, which serves both the
  // input-gradient dot product and the per-tap weight sums in one sweep.
  const int iz_lo = std::max(0, ceil_div(pad_, stride_));
  const int iz_hi = std::min(Z - 1, floor_div(Zo - kernel_ + pad_, stride_));
  std::vector<double> wacc(kernel_);

  Tensor gx({in_ch_, X, Y, Z});
  for (int ic = 0; ic < in_ch_; ++ic) {
    const double* xvol = x.data() + static_cast<std::int64_t>(ic) * X * Y * Z;
    double* gxvol = gx.data() + static_cast<std::int64_t>(ic) * X * Y * Z;
    for (int oc = 0; oc < out_ch_; ++oc) {
      const double* wbase = w.data() + (static_cast<std::int64_t>(ic) * out_ch_ + oc) * ksize;
      double* gwbase = gw.data() + (static_cast<std::int64_t>(ic) * out_ch_ + oc) * ksize;
      const double* gvol = gy.data() + oc * ovol;
      for (int kx = 0; kx < kernel_; ++kx) {
        for (int ix = 0; ix < X; ++ix) {
          const int ox = ix * stride_ - pad_ + kx;
          if (ox < 0 || ox >= Xo) continue;
          for (int ky = 0; ky < kernel_; ++ky) {
            const double* wrow = wbase + (static_cast<std::int64_t>(kx) * kernel_ + ky) * kernel_;
            double* gwrow = gwbase + (static_cast<std::int64_t>(kx) * kernel_ + ky) * kernel_;
            for (int iy = 0; iy < Y; ++iy) {
              const int oy = iy * stride_ - pad_ + ky;
              if (oy < 0 || oy >= Yo) continue;
              const double* xrow = xvol + (static_cast<std::int64_t>(ix) * Y + iy) * Z;
              double* gxrow = gxvol + (static_cast<std::int64_t>(ix) * Y + iy) * Z;
              const double* grow = gvol + (static_cast<std::int64_t>(ox) * Yo + oy) * Zo;
              for (int kz = 0; kz < kernel_; ++kz) wacc[kz] = 0.0;
              auto edge = [&](int from, int to) {
                for (int iz = from; iz <= to; ++iz) {
                  const int base = iz * stride_ - pad_;
                  const int k_lo = std::max(0, -base);
                  const int k_hi = std::min(kernel_ - 1, Zo - 1 - base);
                  const double* gb_row = grow + base;
                  const double xv = xrow[iz];
                  double dot = 0.0;
                  for (int kz = k_lo; kz <= k_hi; ++kz) {
                    const double gv = gb_row[kz];
                    dot += wrow[kz] * gv;
                    wacc[kz] += xv * gv;
                  }
                  gxrow[iz] += dot;
                }
              };
              if (iz_lo > iz_hi) {
                edge(0, Z - 1);
                for (int kz = 0; kz < kernel_; ++kz) gwrow[kz] += wacc[kz];
                continue;
              }
              edge(0, iz_lo - 1);
              if (kernel_ == 4) {
                // Scalar accumulators keep the hot loop in registers; the
                // heap-backed wacc buffer only collects the edge terms.
                const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2], w3 = wrow[3];
                double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                for (int iz = iz_lo; iz <= iz_hi; ++iz) {
                  const double* gb_row = grow + (iz * stride_ - pad_);
                  const double xv = xrow[iz];
                  const double g0 = gb_row[0], g1 = gb_row[1], g2 = gb_row[2], g3 = gb_row[3];
                  gxrow[iz] += w0 * g0 + w1 * g1 + w2 * g2 + w3 * g3;
                  a0 += xv * g0;
                  a1 += xv * g1;
                  a2 += xv * g2;
                  a3 += xv * g3;
                }
                wacc[0] += a0;
                wacc[1] += a1;
                wacc[2] += a2;
                wacc[3] += a3;
              } else {
                for (int iz = iz_lo; iz <= iz_hi; ++iz) {
                  const double* gb_row = grow + (iz * stride_ - pad_);
                  const double xv = xrow[iz];
                  double dot = 0.0;
                  for (int kz = 0; kz < kernel_; ++kz) {
                    const double gv = gb_row[kz];
                    dot += wrow[kz] * gv;
                    wacc[kz] += xv * gv;
                  }
                  gxrow[iz] += dot;
                }
              }
              edge(iz_hi + 1, Z - 1);
              for (int kz = 0; kz < kernel_; ++kz) gwrow[kz] += wacc[kz];
            }
          }
        }
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : name_(std::move(name)), in_(in_features), out_(out_features) {
  AMM_CHECK(in_features > 0 && out_features > 0, ErrCode::kInvalidArgument,
            "bad Linear geometry for " << name_);
  w = Tensor({out_, in_});
  b = Tensor({out_});
  gw = Tensor({out_, in_});
  gb = Tensor({out_});
}

void Linear::init(std::mt19937_64& rng) {
  const double bound = fan_in_bound(in_);
  fill_uniform(w, rng, -bound, bound);
  b.zero();
}

void Linear::collect(ParamList& out) {
  out.push_back({name_ + "/w", &w, &gw});
  out.push_back({name_ + "/b", &b, &gb});
}

Tensor Linear::forward(const Tensor& x) const {
  AMM_CHECK(x.size() == in_, ErrCode::kShapeMismatch,
            name_ << " expects " << in_ << " inputs, got " << x.size());
  Tensor y({out_});
  const double* xp = x.data();
  for (int o = 0; o < out_; ++o) {
    const double* wrow = w.data() + static_cast<std::int64_t>(o) * in_;
    double acc = b[o];
    for (int i = 0; i < in_; ++i) acc += wrow[i] * xp[i];
    y[o] = acc;
  }
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& gy) {
  AMM_CHECK(gy.size() == out_, ErrCode::kShapeMismatch,
            name_ << " got gradient of size " << gy.size());
  Tensor gx(x.shape());
  const double* xp = x.data();
  double* gxp = gx.data();
  for (int o = 0; o < out_; ++o) {
    const double g = gy[o];
    gb[o] += g;
    const double* wrow = w.data() + static_cast<std::int64_t>(o) * in_;
    double* gwrow = gw.data() + static_cast<std::int64_t>(o) * in_;
    for (int i = 0; i < in_; ++i) {
      gwrow[i] += g * xp[i];
      gxp[i] += g * wrow[i];
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Ddr3d

int ddr_effective_stride(const std::array<int, 3>& in_dims, int stride) {
  if (stride <= 1) return 1;
  for (int d : in_dims) {
    if (d % stride != 0) return 1;
  }
  return stride;
}

Ddr3d::Ddr3d(std::string name, int in_ch, int out_ch, int dilation, int stride)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), dilation_(dilation),
      stride_(stride) {
  AMM_CHECK(in_ch > 0 && out_ch > 0 && dilation > 0 && stride > 0, ErrCode::kInvalidArgument,
            "bad block geometry for " << name_);
  const int r = std::max(1, out_ch / 2);
  const int d = dilation_;
  const int s = stride_;
  reduce = Conv3d::pointwise(name_ + "/reduce", in_ch_, r);
  conv_x = Conv3d(name_ + "/conv_x", r, r, {3, 1, 1}, {s, 1, 1}, {d, 0, 0}, {d, 1, 1});
  conv_y = Conv3d(name_ + "/conv_y", r, r, {1, 3, 1}, {1, s, 1}, {0, d, 0}, {1, d, 1});
  conv_z = Conv3d(name_ + "/conv_z", r, r, {1, 1, 3}, {1, 1, s}, {0, 0, d}, {1, 1, d});
  expand = Conv3d::pointwise(name_ + "/expand", r, out_ch_);
  has_shortcut = in_ch_ != out_ch_ || stride_ != 1;
  if (has_shortcut) {
    shortcut = Conv3d(name_ + "/shortcut", in_ch_, out_ch_, {1, 1, 1}, {s, s, s}, {0, 0, 0});
  }
}

void Ddr3d::init(std::mt19937_64& rng) {
  reduce.init(rng);
  conv_x.init(rng);
  conv_y.init(rng);
  conv_z.init(rng);
  expand.init(rng);
  if (has_shortcut) shortcut.init(rng);
}

void Ddr3d::collect(ParamList& out) {
  reduce.collect(out);
  conv_x.collect(out);
  conv_y.collect(out);
  conv_z.collect(out);
  expand.collect(out);
  if (has_shortcut) shortcut.collect(out);
}

Ddr3d::Acts Ddr3d::forward(const Tensor& x) const {
  Acts acts;
  acts.x = x;
  acts.r = relu(reduce.forward(x));
  acts.hx = relu(conv_x.forward(acts.r));
  acts.hy = relu(conv_y.forward(acts.hx));
  acts.hz = relu(conv_z.forward(acts.hy));
  acts.e = expand.forward(acts.hz);
  acts.sc = has_shortcut ? shortcut.forward(x) : x;
  AMM_CHECK(acts.e.same_shape(acts.sc), ErrCode::kShapeMismatch,
            name_ << " residual shapes differ: " << acts.e.shape_str() << " vs "
                  << acts.sc.shape_str() << " (resolve the stride with ddr_effective_stride)");
  Tensor sum = acts.e;
  sum.add_scaled(acts.sc, 1.0);
  acts.y = relu(sum);
  return acts;
}

Tensor Ddr3d::backward(const Acts& acts, const Tensor& gy) {
  const Tensor gsum = relu_backward(acts.y, gy);
  Tensor gh = expand.backward(acts.hz, gsum);
  gh = relu_backward(acts.hz, gh);
  gh = conv_z.backward(acts.hy, gh);
  gh = relu_backward(acts.hy, gh);
  gh = conv_y.backward(acts.hx, gh);
  gh = relu_backward(acts.hx, gh);
  gh = conv_x.backward(acts.r, gh);
  gh = relu_backward(acts.r, gh);
  Tensor gx = reduce.backward(acts.x, gh);
  if (has_shortcut) {
    gx.add_scaled(shortcut.backward(acts.x, gsum), 1.0);
  } else {
    gx.add_scaled(gsum, 1.0);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::attach(const ParamList& params) {
  m_.clear();
  v_.clear();
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const ParamRef& p : params) {
    m_.emplace_back(p.value->shape());
    v_.emplace_back(p.value->shape());
  }
  t_ = 0;
}

void AdamW::step(const ParamList& params, double lr) {
  AMM_CHECK(params.size() == m_.size(), ErrCode::kInvalidArgument,
            "optimizer was attached to " << m_.size() << " parameters but stepped with "
                                         << params.size());
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* wp = params[i].value->data();
    const double* gp = params[i].grad->data();
    double* mp = m_[i].data();
    double* vp = v_[i].data();
    const std::int64_t n = params[i].value->size();
    for (std::int64_t j = 0; j < n; ++j) {
      const double g = gp[j];
      mp[j] = beta1_ * mp[j] + (1.0 - beta1_) * g;
      vp[j] = beta2_ * vp[j] + (1.0 - beta2_) * g * g;
      const double mhat = mp[j] / bc1;
      const double vhat = vp[j] / bc2;
      wp[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * wp[j]);
    }
  }
}

double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_min) {
  AMM_CHECK(total_epochs > 0, ErrCode::kInvalidArgument,
            "total epoch count must be positive, got " << total_epochs);
  AMM_CHECK(epoch >= 0 && epoch < total_epochs, ErrCode::kInvalidArgument,
            "epoch " << epoch << " outside [0, " << total_epochs << ")");
  if (total_epochs == 1) return lr_init;
  const double pos = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(3.14159265358979323846 * pos));
}

double max_rel_err_fd(const std::function<double()>& loss_fn, double* values,
                      const double* analytic, std::int64_t count, std::int64_t max_probes,
                      std::mt19937_64& rng, double step) {
  AMM_CHECK(count > 0, ErrCode::kInvalidArgument, "gradient check on an empty parameter");
  std::vector<std::int64_t> picks;
  if (max_probes >= count) {
    picks.resize(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) picks[static_cast<std::size_t>(i)] = i;
  } else {
    std::uniform_int_distribution<std::int64_t> draw(0, count - 1);
    for (std::int64_t i = 0; i < max_probes; ++i) picks.push_back(draw(rng));
  }

  double worst = 0.0;
  for (std::int64_t idx : picks) {
    const double saved = values[idx];
    values[idx] = saved + step;
    const double up = loss_fn();
    values[idx] = saved - step;
    const double down = loss_fn();
    values[idx] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double a = analytic[idx];
    const double rel = std::fabs(a - fd) / (std::fabs(a) + std::fabs(fd) + 1e-4);
    worst = std::max(worst, rel);
  }
  return worst;
}

Tensor nearest_resize2d(const Tensor& x, int out_h, int out_w) {
  AMM_CHECK(x.rank() == 3, ErrCode::kShapeMismatch,
            "resize expects (channels, h, w), got " << x.shape_str());
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  AMM_CHECK(out_h > 0 && out_w > 0, ErrCode::kInvalidArgument, "resize target collapses");
  AMM_CHECK((out_h % H == 0 || H % out_h == 0) && (out_w % W == 0 || W % out_w == 0),
            ErrCode::kInvalidArgument,
            "resize only supports integer factors, got " << H << "x" << W << " -> " << out_h
                                                         << "x" << out_w);
  Tensor y({C, out_h, out_w});
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < out_h; ++r) {
      const int sr = static_cast<int>(static_cast<std::int64_t>(r) * H / out_h);
      for (int q = 0; q < out_w; ++q) {
        const int sq = static_cast<int>(static_cast<std::int64_t>(q) * W / out_w);
        y.at(c, r, q) = x.at(c, sr, sq);
      }
    }
  }
  return y;
}

Tensor nearest_resize2d_backward(const Tensor& gy, int in_h, int in_w) {
  const int C = gy.dim(0), Ho = gy.dim(1), Wo = gy.dim(2);
  Tensor gx({C, in_h, in_w});
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < Ho; ++r) {
      const int sr = static_cast<int>(static_cast<std::int64_t>(r) * in_h / Ho);
      for (int q = 0; q < Wo; ++q) {
        const int sq = static_cast<int>(static_cast<std::int64_t>(q) * in_w / Wo);
        gx.at(c, sr, sq) += gy.at(c, r, q);
      }
    }
  }
  return gx;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  AMM_CHECK(!parts.empty(), ErrCode::kInvalidArgument, "concat of zero tensors");
  const int H = parts[0]->dim(1), W = parts[0]->dim(2);
  int total = 0;
  for (const Tensor* t : parts) {
    AMM_CHECK(t->rank() == 3 && t->dim(1) == H && t->dim(2) == W, ErrCode::kShapeMismatch,
              "concat plane " << t->shape_str() << " does not match " << H << "x" << W);
    total += t->dim(0);
  }
  Tensor y({total, H, W});
  double* dst = y.data();
  for (const Tensor* t : parts) {
    std::copy(t->data(), t->data() + t->size(), dst);
    dst += t->size();
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& gcat, const std::vector<int>& channels) {
  int total = 0;
  for (int c : channels) total += c;
  AMM_CHECK(gcat.rank() == 3 && gcat.dim(0) == total, ErrCode::kShapeMismatch,
            "split of " << gcat.shape_str() << " into " << total << " channels");
  const int H = gcat.dim(1), W = gcat.dim(2);
  std::vector<Tensor> parts;
  const double* src = gcat.data();
  for (int c : channels) {
    Tensor t({c, H, W});
    std::copy(src, src + t.size(), t.data());
    src += t.size();
    parts.push_back(std::move(t));
  }
  return parts;
}

}  // namespace ammnet
