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

#include "ammnet/discriminator.hpp"

#include <cmath>

#include "ammnet/error.hpp"
#include "ammnet/rng.hpp"

namespace ammnet {

Tensor labels_to_simplex(const LabelGrid& grid, int classes) {
  grid.validate();
  AMM_CHECK(classes >= 1 && classes <= 254, ErrCode::kInvalidArgument,
            "class count " << classes << " out of range [1, 254]");
  const auto& d = grid.spec.dims;
  Tensor out({classes + 1, d[0], d[1], d[2]});
  const std::int64_t n = grid.spec.voxel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint8_t label = grid.labels[static_cast<std::size_t>(i)];
    if (label == kIgnoreLabel) label = 0;
    AMM_CHECK(label <= classes, ErrCode::kBadLabel,
              "label " << int(label) << " exceeds class count " << classes);
    out[static_cast<std::int64_t>(label) * n + i] = 1.0;
  }
  return out;
}

void DiscConfig::validate() const {
  AMM_CHECK(channels >= 1, ErrCode::kBadConfig, "channel count must be positive");
  AMM_CHECK(classes >= 1 && classes <= 254, ErrCode::kBadConfig,
            "class count " << classes << " out of range [1, 254]");
  AMM_CHECK(hidden >= 1, ErrCode::kBadConfig, "hidden width must be positive");
  for (int d : dims) {
    AMM_CHECK(d >= 4 && d % 4 == 0, ErrCode::kBadConfig,
              "scorer needs dims divisible by 4 for its two stride-2 blocks, got "
                  << dims[0] << "x" << dims[1] << "x" << dims[2]);
  }
}

Discriminator::Discriminator(const DiscConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.channels;

  std::array<int, 3> dims = cfg_.dims;
  auto halve = [](std::array<int, 3> v) {
    return std::array<int, 3>{v[0] / 2, v[1] / 2, v[2] / 2};
  };
  strides_[0] = 2;
  strides_[1] = 2;
  dims = halve(halve(dims));
  strides_[2] = ddr_effective_stride(dims, 3);
  if (strides_[2] == 3) dims = {dims[0] / 3, dims[1] / 3, dims[2] / 3};
  strides_[3] = 1;
  out_dims_ = dims;
  flat_ = static_cast<std::int64_t>(d) * dims[0] * dims[1] * dims[2];

  l1 = Ddr3d("disc/l1", cfg_.classes + 1, d, 1, strides_[0]);
  l2 = Ddr3d("disc/l2", d, d, 1, strides_[1]);
  l3 = Ddr3d("disc/l3", d, d, 1, strides_[2]);
  l4 = Ddr3d("disc/l4", d, d, 1, strides_[3]);
  lin1 = Linear("disc/lin1", static_cast<int>(flat_), cfg_.hidden);
  lin2 = Linear("disc/lin2", cfg_.hidden, 1);

  l1.collect(params_);
  l2.collect(params_);
  l3.collect(params_);
  l4.collect(params_);
  lin1.collect(params_);
  lin2.collect(params_);
}

void Discriminator::init_params() {
  const std::uint64_t seed = cfg_.seed;
  auto r1 = make_rng(seed, "disc/l1", 0);
  l1.init(r1);
  auto r2 = make_rng(seed, "disc/l2", 0);
  l2.init(r2);
  auto r3 = make_rng(seed, "disc/l3", 0);
  l3.init(r3);
  auto r4 = make_rng(seed, "disc/l4", 0);
  l4.init(r4);
  auto r5 = make_rng(seed, "disc/lin1", 0);
  lin1.init(r5);
  auto r6 = make_rng(seed, "disc/lin2", 0);
  lin2.init(r6);
}

Discriminator::Acts Discriminator::forward(const Tensor& volume) const {
  AMM_CHECK(volume.rank() == 4 && volume.dim(0) == cfg_.classes + 1 &&
                volume.dim(1) == cfg_.dims[0] && volume.dim(2) == cfg_.dims[1] &&
                volume.dim(3) == cfg_.dims[2],
            ErrCode::kShapeMismatch,
            "scorer input has shape " << volume.shape_str());
  if (debug_checks_) {
    const std::int64_t n =
        static_cast<std::int64_t>(cfg_.dims[0]) * cfg_.dims[1] * cfg_.dims[2];
    const int ch = cfg_.classes + 1;
    for (std::int64_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double v = volume[static_cast<std::int64_t>(c) * n + i];
        AMM_CHECK(v >= 0.0, ErrCode::kBadSimplex,
                  "negative probability " << v << " at voxel " << i);
        sum += v;
      }
      AMM_CHECK(std::abs(sum - 1.0) <= 1e-4, ErrCode::kBadSimplex,
                "channel sum " << sum << " at voxel " << i << " is not a distribution");
    }
  }

  Acts a;
  a.input = volume;
  a.l1 = l1.forward(volume);
  a.l2 = l2.forward(a.l1.y);
  a.l3 = l3.forward(a.l2.y);
  a.l4 = l4.forward(a.l3.y);
  a.hid = relu(lin1.forward(a.l4.y));
  Tensor out = lin2.forward(a.hid);
  a.logit = out[0];
  a.p = sigmoid(a.logit);
  return a;
}

Tensor Discriminator::backward(const Acts& acts, double g_logit) {
  Tensor g1({1});
  g1[0] = g_logit;
  Tensor g = lin2.backward(acts.hid, g1);
  g = relu_backward(acts.hid, g);
  g = lin1.backward(acts.l4.y, g);
  g = l4.backward(acts.l4, g);
  g = l3.backward(acts.l3, g);
  g = l2.backward(acts.l2, g);
  return l1.backward(acts.l1, g);
}

nlohmann::json Discriminator::manifest() const {
  return nlohmann::json{
      {"input_channels", cfg_.classes + 1},
      {"channels", cfg_.channels},
      {"requested_strides", {2, 2, 3, 1}},
      {"effective_strides", strides_},
      {"stride_adapted", strides_[2] != 3},
      {"flatten_dims", out_dims_},
      {"flatten_size", flat_},
      {"hidden", cfg_.hidden},
  };
}

}  // namespace ammnet
