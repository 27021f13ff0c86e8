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
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "ammnet/voxel_data.hpp"

namespace ammnet {

// Label-space corruptions used to make fake completions for the adversary.
// Both kinds leave empty space (label 0) and ignored voxels untouched, and
// both are deterministic in (input, parameters, rng state).

struct PerturbRecord {
  std::string kind;             // "geometric" or "semantic"
  double p_geo = 0.0;           // geometric erase probability
  std::vector<int> categories;  // semantic: perturbed source categories
  std::vector<int> targets;     // semantic: replacement class per category
  std::vector<double> probs;    // semantic: per-category flip probability
  std::int64_t candidates = 0;  // voxels eligible for change
  std::int64_t changed = 0;     // voxels actually changed
};

void to_json(nlohmann::json& j, const PerturbRecord& rec);

// Erases each occupied voxel to empty with probability p. Exact at the
// edges: p = 0 changes nothing, p = 1 erases every occupied voxel.
LabelGrid perturb_geometric(const LabelGrid& grid, double p, std::mt19937_64& rng,
                            PerturbRecord* record = nullptr);

// Picks n ~ Uniform{1..m} of the m categories present in the grid, assigns
// each picked category j a replacement class drawn uniformly from the other
// classes and a flip probability drawn from [ps_min, ps_max], then reflags
// each voxel of category j with that probability. Occupancy is preserved:
// flipped voxels stay occupied. A grid with no occupied voxels comes back
// unchanged.
LabelGrid perturb_semantic(const LabelGrid& grid, int classes, double ps_min, double ps_max,
                           std::mt19937_64& rng, PerturbRecord* record = nullptr);

}  // namespace ammnet
