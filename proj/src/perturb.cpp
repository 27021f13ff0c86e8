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

#include "ammnet/perturb.hpp"

#include <algorithm>

#include "ammnet/error.hpp"

namespace ammnet {

void to_json(nlohmann::json& j, const PerturbRecord& rec) {
  j = nlohmann::json{{"kind", rec.kind},
                     {"candidates", rec.candidates},
                     {"changed", rec.changed}};
  if (rec.kind == "geometric") {
    j["p"] = rec.p_geo;
  } else {
    j["categories"] = rec.categories;
    j["targets"] = rec.targets;
    j["probs"] = rec.probs;
  }
}

LabelGrid perturb_geometric(const LabelGrid& grid, double p, std::mt19937_64& rng,
                            PerturbRecord* record) {
  grid.validate();
  AMM_CHECK(p >= 0.0 && p <= 1.0, ErrCode::kInvalidArgument,
            "erase probability must be in [0, 1], got " << p);

  LabelGrid out = grid;
  PerturbRecord rec;
  rec.kind = "geometric";
  rec.p_geo = p;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint8_t& label : out.labels) {
    if (label == 0 || label == kIgnoreLabel) continue;
    rec.candidates++;
    if (unit(rng) < p) {
      label = 0;
      rec.changed++;
    }
  }
  if (record) *record = rec;
  return out;
}

LabelGrid perturb_semantic(const LabelGrid& grid, int classes, double ps_min, double ps_max,
                           std::mt19937_64& rng, PerturbRecord* record) {
  grid.validate();
  AMM_CHECK(classes >= 2, ErrCode::kInvalidArgument,
            "semantic perturbation needs at least 2 classes, got " << classes);
  AMM_CHECK(ps_min >= 0.0 && ps_max <= 1.0 && ps_min <= ps_max, ErrCode::kInvalidArgument,
            "flip probability range [" << ps_min << ", " << ps_max << "] is invalid");

  PerturbRecord rec;
  rec.kind = "semantic";

  std::vector<bool> present(static_cast<std::size_t>(classes) + 1, false);
  for (std::uint8_t label : grid.labels) {
    if (label == 0 || label == kIgnoreLabel) continue;
    AMM_CHECK(label <= classes, ErrCode::kBadLabel,
              "grid holds label " << int(label) << " beyond class count " << classes);
    present[label] = true;
  }
  std::vector<int> pool;
  for (int c = 1; c <= classes; ++c) {
    if (present[static_cast<std::size_t>(c)]) pool.push_back(c);
  }

  LabelGrid out = grid;
  // With fewer than two distinct occupied classes there is no valid shuffle, so
  // the grid passes through unchanged and the record stays empty.
  if (pool.size() < 2) {
    if (record) *record = rec;
    return out;
  }

  std::uniform_int_distribution<int> count_draw(1, static_cast<int>(pool.size()));
  const int n = count_draw(rng);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(n));

  // Per selected category: a replacement class drawn from the other classes
  // and an independent flip probability.
  std::vector<int> target_of(static_cast<std::size_t>(classes) + 1, -1);
  std::vector<double> prob_of(static_cast<std::size_t>(classes) + 1, 0.0);
  std::uniform_real_distribution<double> prob_draw(ps_min, ps_max);
  for (int j : pool) {
    std::uniform_int_distribution<int> other(1, classes - 1);
    int t = other(rng);
    if (t >= j) ++t;
    const double pj = ps_min == ps_max ? ps_min : prob_draw(rng);
    target_of[static_cast<std::size_t>(j)] = t;
    prob_of[static_cast<std::size_t>(j)] = pj;
    rec.categories.push_back(j);
    rec.targets.push_back(t);
    rec.probs.push_back(pj);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint8_t& label : out.labels) {
    if (label == 0 || label == kIgnoreLabel) continue;
    const int t = target_of[label];
    if (t < 0) continue;
    rec.candidates++;
    if (unit(rng) < prob_of[label]) {
      label = static_cast<std::uint8_t>(t);
      rec.changed++;
    }
  }
  if (record) *record = rec;
  return out;
}

}  // namespace ammnet
