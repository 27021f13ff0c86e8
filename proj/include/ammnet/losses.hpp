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

#include <cstdint>
#include <vector>

#include "ammnet/tensor.hpp"
#include "ammnet/voxel_data.hpp"

namespace ammnet {

// Label-smoothed cross entropy over a (C+1, ...) logits tensor against
// per-site byte labels. The smoothed target puts 1 - eps on the true class
// and eps / C on each of the other C classes. Sites labeled IGNORE (and
// sites excluded by the optional 0/1 mask) do not contribute; the result is
// the mean over contributing sites.
double smooth_ce(const Tensor& logits, const std::vector<std::uint8_t>& target, double eps,
                 const std::vector<std::uint8_t>* include = nullptr);

struct SmoothCeGrad {
  double loss = 0.0;
  Tensor g_logits;           // dL/dlogits, already averaged
  std::int64_t counted = 0;  // contributing sites
};

SmoothCeGrad smooth_ce_grad(const Tensor& logits, const std::vector<std::uint8_t>& target,
                            double eps, const std::vector<std::uint8_t>* include = nullptr);

// Per-pixel scene labels seen from the camera: each pixel takes the label of
// the voxel its surface point lands in; pixels with no return or with a
// surface point outside the grid get IGNORE.
LabelImage backproject_labels_2d(const LabelGrid& gt, const ProjectionMap& map);
LabelImage backproject_labels_2d(const LabelGrid& gt, const DepthImage& depth,
                                 const CameraIntrinsics& cam, const GridSpec& grid);

// Scene-completion loss: the 3D smoothed cross entropy plus lambda times the
// 2D term. The 2D label image may be an integer multiple of the logits'
// spatial size, in which case targets are subsampled at the representative
// pixel of each cell (matching the nearest-neighbor projection convention).
// A zero lambda skips the 2D term entirely.
struct SscLoss {
  double total = 0.0;
  double loss3d = 0.0;
  double loss2d = 0.0;
  Tensor g_logits3d;
  Tensor g_logits2d;  // empty when the 2D term was skipped
};

SscLoss ssc_loss_grad(const Tensor& logits3d, const LabelGrid& gt, const Tensor& logits2d,
                      const LabelImage& gt2d, double lambda, double eps);
double ssc_loss(const Tensor& logits3d, const LabelGrid& gt, const Tensor& logits2d,
                const LabelImage& gt2d, double lambda, double eps);

// Guard for confidence scores entering a log.
double clamp_score(double p);

// Adversarial objective values over a batch of confidence scores. The
// scorer's loss sums a real term and three fake terms (generator output,
// geometry-erased GT, semantics-shuffled GT), batch averaged. The
// generator's term defaults to the non-saturating form -log d; the literal
// minimax form +log(1 - d) sits behind the flag.
struct AdvLossValues {
  double loss_d = 0.0;
  double loss_g_adv = 0.0;
};

AdvLossValues adv_losses(const std::vector<double>& d_real, const std::vector<double>& d_gen,
                         const std::vector<double>& d_geo, const std::vector<double>& d_sem,
                         bool literal_g = false);

// Derivatives of the batch-mean objectives w.r.t. a single sample's logit.
// The scorer treats its input as real (target 1) or fake (target 0); the
// generator pushes its sample toward real.
double adv_d_logit_grad(double p, bool is_real, int batch);
double adv_g_logit_grad(double p, bool literal_g, int batch);

}  // namespace ammnet
