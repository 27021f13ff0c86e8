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

#include <nlohmann/json.hpp>

#include "ammnet/tensor.hpp"
#include "ammnet/voxel_data.hpp"

namespace ammnet {

// Per-voxel argmax of a (C+1, Gx, Gy, Gz) score volume (logits or
// probabilities alike); exact ties resolve to the lowest class index.
LabelGrid argmax_to_labels(const Tensor& scores, const GridSpec& spec);

// Raw confusion counts, accumulated per scene and summed across scenes so
// dataset-level metrics are ratios of totals rather than means of ratios.
// Occupancy counts cover occluded voxels only; the per-class counts cover
// all scored (visible or occluded) voxels. Ground-truth IGNORE voxels stay
// out of every count.
struct MetricCounts {
  int classes = 0;
  std::int64_t occluded_scored = 0;
  std::int64_t sc_tp = 0, sc_fp = 0, sc_fn = 0;
  std::vector<std::int64_t> inter, uni, support;  // indexed by class, entry 0 unused

  void add(const MetricCounts& other);
};

MetricCounts accumulate_metrics(const LabelGrid& pred, const LabelGrid& gt, const EvalMask& mask,
                                int classes);

struct MetricsReport {
  double sc_precision = 0.0, sc_recall = 0.0, sc_iou = 0.0;
  std::vector<double> per_class_iou;       // classes 1..C; zero-union classes read 0
  std::vector<std::int64_t> supports;      // ground-truth voxels per class
  double ssc_miou = 0.0;                   // mean over classes with nonzero union
};

// Turns summed counts into the report. Precision and recall with an empty
// denominator are 1 when both occupancy sets are empty and 0 otherwise;
// requires at least one scored occluded voxel.
MetricsReport finalize_metrics(const MetricCounts& counts);

// Single-scene conveniences over accumulate + finalize.
struct ScResult {
  double precision = 0.0, recall = 0.0, iou = 0.0;
};
ScResult sc_metrics(const LabelGrid& pred, const LabelGrid& gt, const EvalMask& mask);

struct SscResult {
  std::vector<double> per_class_iou;
  std::vector<std::int64_t> supports;
  double miou = 0.0;
};
SscResult ssc_miou(const LabelGrid& pred, const LabelGrid& gt, const EvalMask& mask, int classes);

nlohmann::json report_to_json(const MetricsReport& report);

}  // namespace ammnet
