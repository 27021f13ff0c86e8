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

#include "ammnet/metrics.hpp"

#include "ammnet/error.hpp"

namespace ammnet {

LabelGrid argmax_to_labels(const Tensor& scores, const GridSpec& spec) {
  spec.validate();
  const std::int64_t n = spec.voxel_count();
  AMM_CHECK(scores.rank() == 4 && scores.dim(1) == spec.dims[0] &&
                scores.dim(2) == spec.dims[1] && scores.dim(3) == spec.dims[2],
            ErrCode::kShapeMismatch,
            "scores " << scores.shape_str() << " do not cover the grid");
  const int ch = scores.dim(0);
  AMM_CHECK(ch >= 1 && ch <= 255, ErrCode::kShapeMismatch,
            "cannot store argmax over " << ch << " channels in byte labels");

  LabelGrid out;
  out.spec = spec;
  out.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    int best = 0;
    double best_v = scores[i];
    for (int c = 1; c < ch; ++c) {
      const double v = scores[c * n + i];
      if (v > best_v) {  // strict: ties keep the lowest index
        best_v = v;
        best = c;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void MetricCounts::add(const MetricCounts& other) {
  AMM_CHECK(classes == other.classes, ErrCode::kInvalidArgument,
            "cannot merge counts over " << classes << " and " << other.classes << " classes");
  occluded_scored += other.occluded_scored;
  sc_tp += other.sc_tp;
  sc_fp += other.sc_fp;
  sc_fn += other.sc_fn;
  for (std::size_t c = 0; c < inter.size(); ++c) {
    inter[c] += other.inter[c];
    uni[c] += other.uni[c];
    support[c] += other.support[c];
  }
}

MetricCounts accumulate_metrics(const LabelGrid& pred, const LabelGrid& gt, const EvalMask& mask,
                                int classes) {
  pred.validate();
  gt.validate();
  AMM_CHECK(pred.spec.dims == gt.spec.dims && gt.spec.dims == mask.spec.dims,
            ErrCode::kShapeMismatch, "prediction, ground truth, and mask dims disagree");
  AMM_CHECK(classes >= 1 && classes <= 254, ErrCode::kInvalidArgument,
            "class count " << classes << " out of range [1, 254]");

  MetricCounts counts;
  counts.classes = classes;
  counts.inter.assign(static_cast<std::size_t>(classes) + 1, 0);
  counts.uni.assign(static_cast<std::size_t>(classes) + 1, 0);
  counts.support.assign(static_cast<std::size_t>(classes) + 1, 0);

  const std::int64_t n = gt.spec.voxel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t g = gt.labels[static_cast<std::size_t>(i)];
    if (g == kIgnoreLabel) continue;
    const std::uint8_t p = pred.labels[static_cast<std::size_t>(i)];
    AMM_CHECK(p <= classes, ErrCode::kBadLabel,
              "prediction holds label " << int(p) << " beyond class count " << classes);
    AMM_CHECK(g <= classes, ErrCode::kBadLabel,
              "ground truth holds label " << int(g) << " beyond class count " << classes);
    const MaskState state = mask.states[static_cast<std::size_t>(i)];
    if (state == MaskState::kOutside) continue;

    if (state == MaskState::kOccluded) {
      counts.occluded_scored++;
      const bool po = p > 0, go = g > 0;
      if (po && go) counts.sc_tp++;
      if (po && !go) counts.sc_fp++;
      if (!po && go) counts.sc_fn++;
    }
    // Semantic counts cover visible and occluded voxels alike.
    if (g > 0) counts.support[g]++;
    if (p > 0 || g > 0) {
      if (p == g) {
        counts.inter[p]++;
        counts.uni[p]++;
      } else {
        if (p > 0) counts.uni[p]++;
        if (g > 0) counts.uni[g]++;
      }
    }
  }
  return counts;
}

namespace {

double guarded_ratio(std::int64_t num, std::int64_t den, bool both_empty) {
  if (den == 0) return both_empty ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport finalize_metrics(const MetricCounts& counts) {
  AMM_CHECK(counts.occluded_scored > 0, ErrCode::kEmptyMask,
            "no scored occluded voxels; occupancy metrics are undefined");

  MetricsReport r;
  const bool both_empty = counts.sc_tp + counts.sc_fp + counts.sc_fn == 0;
  r.sc_precision = guarded_ratio(counts.sc_tp, counts.sc_tp + counts.sc_fp, both_empty);
  r.sc_recall = guarded_ratio(counts.sc_tp, counts.sc_tp + counts.sc_fn, both_empty);
  r.sc_iou = guarded_ratio(counts.sc_tp, counts.sc_tp + counts.sc_fp + counts.sc_fn, both_empty);

  r.per_class_iou.assign(static_cast<std::size_t>(counts.classes), 0.0);
  r.supports.assign(static_cast<std::size_t>(counts.classes), 0);
  double sum = 0.0;
  int scored_classes = 0;
  for (int c = 1; c <= counts.classes; ++c) {
    const std::int64_t u = counts.uni[static_cast<std::size_t>(c)];
    r.supports[static_cast<std::size_t>(c) - 1] = counts.support[static_cast<std::size_t>(c)];
    if (u == 0) continue;  // class absent from both; stays out of the mean
    const double iou =
        static_cast<double>(counts.inter[static_cast<std::size_t>(c)]) / static_cast<double>(u);
    r.per_class_iou[static_cast<std::size_t>(c) - 1] = iou;
    sum += iou;
    scored_classes++;
  }
  r.ssc_miou = scored_classes > 0 ? sum / scored_classes : 0.0;
  return r;
}

ScResult sc_metrics(const LabelGrid& pred, const LabelGrid& gt, const EvalMask& mask) {
  // Class count is irrelevant for binary occupancy; use the widest legal one
  // so any valid labels pass through.
  MetricsReport r = finalize_metrics(accumulate_metrics(pred, gt, mask, 254));
  return {r.sc_precision, r.sc_recall, r.sc_iou};
}

SscResult ssc_miou(const LabelGrid& pred, const LabelGrid& gt, const EvalMask& mask, int classes) {
  MetricsReport r = finalize_metrics(accumulate_metrics(pred, gt, mask, classes));
  return {r.per_class_iou, r.supports, r.ssc_miou};
}

nlohmann::json report_to_json(const MetricsReport& report) {
  return nlohmann::json{
      {"sc_precision", report.sc_precision},
      {"sc_recall", report.sc_recall},
      {"sc_iou", report.sc_iou},
      {"per_class_iou", report.per_class_iou},
      {"ssc_miou", report.ssc_miou},
      {"supports", report.supports},
  };
}

}  // namespace ammnet
