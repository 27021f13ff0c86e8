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

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ammnet/tensor.hpp"

namespace ammnet {

// Layers register their parameters as (name, value, grad) triples; the
// optimizer and checkpoint code work on these lists and never need to know
// the network structure.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};
using ParamList = std::vector<ParamRef>;

void zero_grads(const ParamList& params);

// Activations. relu_backward masks by the forward output, so layers only
// need to keep post-activation tensors.
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& gy);

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Softmax over dimension 0 of a (C, ...) tensor, applied independently at
// every trailing position.
Tensor softmax_channels(const Tensor& logits);
Tensor softmax_channels_backward(const Tensor& probs, const Tensor& grad_probs);

// 2D convolution over (channels, rows, cols) tensors with a square kernel.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad);

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  Tensor forward(const Tensor& x) const;
  // Accumulates parameter gradients and returns the input gradient.
  Tensor backward(const Tensor& x, const Tensor& gy);

  int out_ch() const { return out_ch_; }

 private:
  std::string name_;
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 0, stride_ = 0, pad_ = 0;

 public:
  Tensor w, b, gw, gb;  // w is (out_ch, in_ch, k, k)
};

// 3D convolution over (channels, x, y, z) tensors with independent kernel,
// stride, padding, and dilation per axis, which covers cube kernels,
// pointwise convs, and the axis-aligned 1D convs alike.
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(std::string name, int in_ch, int out_ch, std::array<int, 3> kernel,
         std::array<int, 3> stride, std::array<int, 3> pad,
         std::array<int, 3> dilation = {1, 1, 1});

  static Conv3d cube(std::string name, int in_ch, int out_ch, int k, int s, int p);
  static Conv3d pointwise(std::string name, int in_ch, int out_ch);

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& gy);

  std::array<int, 3> out_dims(const std::array<int, 3>& in) const;
  int out_ch() const { return out_ch_; }

 private:
  std::string name_;
  int in_ch_ = 0, out_ch_ = 0;
  std::array<int, 3> kernel_{}, stride_{}, pad_{}, dilation_{};

 public:
  Tensor w, b, gw, gb;  // w is (out_ch, in_ch * kx * ky * kz)
};

// Transposed 3D convolution (cube kernel, equal stride and padding on all
// axes). Output size per axis is (in - 1) * stride + kernel - 2 * pad.
class ConvTranspose3d {
 public:
  ConvTranspose3d() = default;
  ConvTranspose3d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad);

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& gy);

  int out_size(int in) const { return (in - 1) * stride_ + kernel_ - 2 * pad_; }
  int out_ch() const { return out_ch_; }

 private:
  std::string name_;
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 0, stride_ = 0, pad_ = 0;

 public:
  Tensor w, b, gw, gb;  // w is (in_ch, out_ch, k * k * k)
};

// Fully connected layer on flattened inputs.
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  Tensor forward(const Tensor& x) const;  // any shape with in_features elements
  Tensor backward(const Tensor& x, const Tensor& gy);

 private:
  std::string name_;
  int in_ = 0, out_ = 0;

 public:
  Tensor w, b, gw, gb;  // w is (out, in)
};

// Chooses the stride a downsampling block can apply to the given dims: the
// requested stride when it divides every axis evenly, otherwise 1.
int ddr_effective_stride(const std::array<int, 3>& in_dims, int stride);

// Residual block: pointwise reduction to half the output width, three
// axis-aligned 1D convolutions (x, then y, then z) sharing one dilation and
// stride, pointwise expansion, and a residual connection. The shortcut is
// the identity when shapes match and a strided pointwise convolution
// otherwise. Callers resolve the stride against their input dims first
// (see ddr_effective_stride).
class Ddr3d {
 public:
  Ddr3d() = default;
  Ddr3d(std::string name, int in_ch, int out_ch, int dilation, int stride);

  void init(std::mt19937_64& rng);
  void collect(ParamList& out);

  struct Acts {
    Tensor x;              // block input
    Tensor r, hx, hy, hz;  // post-activation intermediates
    Tensor e;              // expansion output, before the residual add
    Tensor sc;             // shortcut branch output
    Tensor y;              // block output
  };

  Acts forward(const Tensor& x) const;
  Tensor backward(const Acts& acts, const Tensor& gy);

  int out_ch() const { return out_ch_; }
  int stride() const { return stride_; }

 private:
  std::string name_;
  int in_ch_ = 0, out_ch_ = 0, dilation_ = 1, stride_ = 1;

 public:
  Conv3d reduce, conv_x, conv_y, conv_z, expand, shortcut;
  bool has_shortcut = false;
};

// Decoupled weight decay Adam. Weight decay multiplies the parameter
// directly instead of entering the moment estimates.
class AdamW {
 public:
  AdamW() = default;
  AdamW(double beta1, double beta2, double eps, double weight_decay);

  void attach(const ParamList& params);
  void step(const ParamList& params, double lr);

  std::int64_t steps() const { return t_; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_ = 0.0;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Per-epoch cosine decay from lr_init at epoch 0 to lr_min at the final
// epoch. A single-epoch run uses lr_init.
double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_min);

// Central-difference gradient check: perturbs up to max_probes randomly
// chosen entries of values, re-evaluates loss_fn, and compares against the
// analytic gradient. Returns the worst relative error seen.
double max_rel_err_fd(const std::function<double()>& loss_fn, double* values,
                      const double* analytic, std::int64_t count, std::int64_t max_probes,
                      std::mt19937_64& rng, double step = 1e-5);

// Nearest-neighbor resize of a (channels, rows, cols) tensor by integer
// factors, plus its adjoint for the backward pass.
Tensor nearest_resize2d(const Tensor& x, int out_h, int out_w);
Tensor nearest_resize2d_backward(const Tensor& gy, int in_h, int in_w);

// Channel concatenation of equally sized planes, and the matching split of
// the gradient.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
std::vector<Tensor> split_channels(const Tensor& gcat, const std::vector<int>& channels);

}  // namespace ammnet
