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

#include "ammnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ammnet/error.hpp"

namespace ammnet {

SmoothCeGrad smooth_ce_grad(const Tensor& logits, const std::vector<std::uint8_t>& target,
                            double eps, const std::vector<std::uint8_t>* include) {
  AMM_CHECK(logits.rank() >= 2, ErrCode::kShapeMismatch,
            "logits need a leading class dimension, got " << logits.shape_str());
  const int ch = logits.dim(0);
  AMM_CHECK(ch >= 2, ErrCode::kShapeMismatch, "need at least two classes, got " << ch);
  const std::int64_t n = logits.size() / ch;
  AMM_CHECK(static_cast<std::int64_t>(target.size()) == n, ErrCode::kShapeMismatch,
            "got " << target.size() << " labels for " << n << " sites");
  AMM_CHECK(include == nullptr || static_cast<std::int64_t>(include->size()) == n,
            ErrCode::kShapeMismatch, "mask size does not match site count");
  AMM_CHECK(eps >= 0.0 && eps < 1.0, ErrCode::kInvalidArgument,
            "smoothing must lie in [0, 1), got " << eps);

  const double off_mass = eps / (ch - 1);  // per wrong class
  SmoothCeGrad out;
  out.g_logits = Tensor(logits.shape());
  const double* z = logits.data();
  double* g = out.g_logits.data();

  double sum = 0.0;
  std::int64_t counted = 0;
  std::vector<double> p(static_cast<std::size_t>(ch));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t label = target[static_cast<std::size_t>(i)];
    if (label == kIgnoreLabel) continue;
    if (include != nullptr && (*include)[static_cast<std::size_t>(i)] == 0) continue;
    AMM_CHECK(label < ch, ErrCode::kBadLabel,
              "label " << int(label) << " out of range for " << ch << " classes");

    double zmax = z[i];
    for (int c = 1; c < ch; ++c) zmax = std::max(zmax, z[c * n + i]);
    double lse = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double e = std::exp(z[c * n + i] - zmax);
      p[static_cast<std::size_t>(c)] = e;
      lse += e;
    }
    const double inv = 1.0 / lse;
    lse = zmax + std::log(lse);

    double dot = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double t = c == label ? 1.0 - eps : off_mass;
      dot += t * z[c * n + i];
      g[c * n + i] = p[static_cast<std::size_t>(c)] * inv - t;
    }
    sum += lse - dot;
    counted++;
  }
  AMM_CHECK(counted > 0, ErrCode::kEmptyMask, "every site is excluded from the loss");

  const double scale = 1.0 / static_cast<double>(counted);
  out.loss = sum * scale;
  out.counted = counted;
  for (std::int64_t i = 0; i < out.g_logits.size(); ++i) g[i] *= scale;
  // Excluded sites never wrote their gradient slots.
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t label = target[static_cast<std::size_t>(i)];
    const bool skipped =
        label == kIgnoreLabel || (include != nullptr && (*include)[static_cast<std::size_t>(i)] == 0);
    if (!skipped) continue;
    for (int c = 0; c < ch; ++c) g[c * n + i] = 0.0;
  }
  return out;
}

double smooth_ce(const Tensor& logits, const std::vector<std::uint8_t>& target, double eps,
                 const std::vector<std::uint8_t>* include) {
  return smooth_ce_grad(logits, target, eps, include).loss;
}

LabelImage backproject_labels_2d(const LabelGrid& gt, const ProjectionMap& map) {
  gt.validate();
  AMM_CHECK(map.spec.dims == gt.spec.dims, ErrCode::kShapeMismatch,
            "projection map grid does not match the label grid");
  LabelImage out;
  out.width = map.width;
  out.height = map.height;
  out.values.assign(static_cast<std::size_t>(map.width) * map.height, kIgnoreLabel);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const std::int64_t voxel = map.voxel_of_pixel[i];
    if (voxel >= 0) out.values[i] = gt.labels[static_cast<std::size_t>(voxel)];
  }
  return out;
}

LabelImage backproject_labels_2d(const LabelGrid& gt, const DepthImage& depth,
                                 const CameraIntrinsics& cam, const GridSpec& grid) {
  return backproject_labels_2d(gt, build_projection_map(depth, cam, grid));
}

namespace {

// Subsamples the full-resolution label image down to the logits' spatial
// size, site-ordered to match the logits layout.
std::vector<std::uint8_t> labels_for_logits2d(const Tensor& logits2d, const LabelImage& gt2d) {
  const int h = logits2d.dim(1), w = logits2d.dim(2);
  AMM_CHECK(gt2d.height % h == 0 && gt2d.width % w == 0 &&
                gt2d.height / h == gt2d.width / w,
            ErrCode::kShapeMismatch,
            "label image " << gt2d.width << "x" << gt2d.height
                           << " is not an integer multiple of the logits plane " << w << "x" << h);
  const int ratio = gt2d.height / h;
  std::vector<std::uint8_t> target(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      target[static_cast<std::size_t>(r) * w + c] = gt2d.at(c * ratio, r * ratio);
    }
  }
  return target;
}

}  // namespace

SscLoss ssc_loss_grad(const Tensor& logits3d, const LabelGrid& gt, const Tensor& logits2d,
                      const LabelImage& gt2d, double lambda, double eps) {
  AMM_CHECK(lambda >= 0.0, ErrCode::kInvalidArgument, "lambda must be non-negative");
  AMM_CHECK(logits3d.rank() == 4 && logits3d.dim(1) == gt.spec.dims[0] &&
                logits3d.dim(2) == gt.spec.dims[1] && logits3d.dim(3) == gt.spec.dims[2],
            ErrCode::kShapeMismatch,
            "logits " << logits3d.shape_str() << " do not cover the label grid");

  SscLoss out;
  SmoothCeGrad g3 = smooth_ce_grad(logits3d, gt.labels, eps);
  out.loss3d = g3.loss;
  out.g_logits3d = std::move(g3.g_logits);

  if (lambda > 0.0) {
    const std::vector<std::uint8_t> target = labels_for_logits2d(logits2d, gt2d);
    SmoothCeGrad g2 = smooth_ce_grad(logits2d, target, eps);
    out.loss2d = g2.loss;
    out.g_logits2d = std::move(g2.g_logits);
    for (std::int64_t i = 0; i < out.g_logits2d.size(); ++i) out.g_logits2d[i] *= lambda;
  }
  out.total = out.loss3d + lambda * out.loss2d;
  return out;
}

double ssc_loss(const Tensor& logits3d, const LabelGrid& gt, const Tensor& logits2d,
                const LabelImage& gt2d, double lambda, double eps) {
  return ssc_loss_grad(logits3d, gt, logits2d, gt2d, lambda, eps).total;
}

double clamp_score(double p) { return std::clamp(p, 1e-7, 1.0 - 1e-7); }

AdvLossValues adv_losses(const std::vector<double>& d_real, const std::vector<double>& d_gen,
                         const std::vector<double>& d_geo, const std::vector<double>& d_sem,
                         bool literal_g) {
  const std::size_t b = d_real.size();
  AMM_CHECK(b > 0, ErrCode::kInvalidArgument, "adversarial losses need a non-empty batch");
  AMM_CHECK(d_gen.size() == b && d_geo.size() == b && d_sem.size() == b,
            ErrCode::kShapeMismatch, "score batches have mismatched sizes");

  double sum_d = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double r = clamp_score(d_real[i]);
    const double gen = clamp_score(d_gen[i]);
    const double geo = clamp_score(d_geo[i]);
    const double sem = clamp_score(d_sem[i]);
    sum_d -= std::log(r) + std::log(1.0 - gen) + std::log(1.0 - geo) + std::log(1.0 - sem);
    sum_g += literal_g ? std::log(1.0 - gen) : -std::log(gen);
  }
  AdvLossValues out;
  out.loss_d = sum_d / static_cast<double>(b);
  out.loss_g_adv = sum_g / static_cast<double>(b);
  return out;
}

double adv_d_logit_grad(double p, bool is_real, int batch) {
  AMM_CHECK(batch > 0, ErrCode::kInvalidArgument, "batch size must be positive");
  return (is_real ? p - 1.0 : p) / static_cast<double>(batch);
}

double adv_g_logit_grad(double p, bool literal_g, int batch) {
  AMM_CHECK(batch > 0, ErrCode::kInvalidArgument, "batch size must be positive");
  return (literal_g ? -p : p - 1.0) / static_cast<double>(batch);
}

}  // namespace ammnet
