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
#include <cstdint>

#include <nlohmann/json.hpp>

#include "ammnet/nn.hpp"
#include "ammnet/tensor.hpp"
#include "ammnet/voxel_data.hpp"

namespace ammnet {

// One-hot encoding of a label grid as a (classes + 1, Gx, Gy, Gz) volume.
// Unscored voxels are encoded as the empty class so every channel vector is
// a valid simplex.
Tensor labels_to_simplex(const LabelGrid& grid, int classes);

struct DiscConfig {
  int channels = 16;  // feature width of the residual stack
  int classes = 11;   // input carries classes + 1 channels
  std::array<int, 3> dims{20, 12, 20};
  int hidden = 64;  // width of the first linear layer
  std::uint64_t seed = 0;

  void validate() const;
};

// Real-versus-fake scorer over per-voxel class distributions: four residual
// blocks with a (2, 2, 3, 1) downsampling plan, then two linear layers to a
// single sigmoid confidence. The stride-3 block drops to stride 1 when the
// incoming dims are not divisible, which keeps the four-layer shape at small
// grid sizes; `manifest` records what was actually built.
class Discriminator {
 public:
  explicit Discriminator(const DiscConfig& cfg);

  const DiscConfig& config() const { return cfg_; }
  const ParamList& params() { return params_; }
  void init_params();

  struct Acts {
    Tensor input;
    Ddr3d::Acts l1, l2, l3, l4;
    Tensor hid;      // post-activation output of the first linear layer
    double logit = 0.0;
    double p = 0.5;
  };

  Acts forward(const Tensor& volume) const;
  // Seeds the backward pass with dL/dlogit, accumulates parameter gradients,
  // and returns the gradient w.r.t. the input volume.
  Tensor backward(const Acts& acts, double g_logit);

  // Per-voxel simplex validation of incoming volumes (sums within 1e-4).
  // On by default; training loops may disable it on hot paths.
  void set_debug_checks(bool on) { debug_checks_ = on; }

  const std::array<int, 4>& effective_strides() const { return strides_; }
  std::int64_t flat_size() const { return flat_; }
  nlohmann::json manifest() const;

  Ddr3d l1, l2, l3, l4;
  Linear lin1, lin2;

 private:
  DiscConfig cfg_;
  std::array<int, 4> strides_{2, 2, 3, 1};
  std::array<int, 3> out_dims_{};
  std::int64_t flat_ = 0;
  bool debug_checks_ = true;
  ParamList params_;
};

}  // namespace ammnet
