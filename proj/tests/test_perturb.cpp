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
//
// Label corruption checks: exact behavior at the probability edges, binomial
// concentration at p = 0.5, occupancy preservation, and the full-remap case
// where the record pins down every voxel's new label.

#include <doctest.h>

#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "ammnet/perturb.hpp"
#include "ammnet/rng.hpp"
#include "ammnet/voxel_data.hpp"
#include "test_support.hpp"

using namespace ammnet;

namespace {

GridSpec cube_spec(int n) {
  GridSpec s;
  s.dims = {n, n, n};
  s.voxel_size = 0.1;
  return s;
}

// Grid with a mixed population: empty space, several classes, and a few
// ignored voxels.
LabelGrid mixed_grid(std::mt19937_64& rng, int n, int classes, double occupancy) {
  LabelGrid g;
  g.spec = cube_spec(n);
  g.labels.resize(static_cast<std::size_t>(g.spec.voxel_count()));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(1, classes);
  for (auto& l : g.labels) {
    const double r = u(rng);
    if (r < occupancy)
      l = static_cast<std::uint8_t>(lab(rng));
    else if (r < occupancy + 0.05)
      l = kIgnoreLabel;
    else
      l = 0;
  }
  return g;
}

std::int64_t count_occupied(const LabelGrid& g) {
  std::int64_t n = 0;
  for (std::uint8_t l : g.labels)
    if (l != 0 && l != kIgnoreLabel) n++;
  return n;
}

}  // namespace

TEST_CASE("geometric erase is exact at both probability edges") {
  std::mt19937_64 data_rng(1);
  const LabelGrid grid = mixed_grid(data_rng, 10, 5, 0.4);

  std::mt19937_64 rng = make_rng(3, "edge");
  PerturbRecord rec;
  const LabelGrid same = perturb_geometric(grid, 0.0, rng, &rec);
  CHECK(same.labels == grid.labels);
  CHECK(rec.changed == 0);
  CHECK(rec.candidates == count_occupied(grid));
  CHECK(rec.kind == "geometric");
  CHECK(rec.p_geo == 0.0);

  const LabelGrid wiped = perturb_geometric(grid, 1.0, rng, &rec);
  CHECK(rec.changed == rec.candidates);
  for (std::size_t i = 0; i < grid.labels.size(); ++i) {
    const std::uint8_t before = grid.labels[i], after = wiped.labels[i];
    if (before == 0 || before == kIgnoreLabel)
      CHECK(after == before);
    else
      CHECK(after == 0);
  }
}

TEST_CASE("geometric erase at half probability concentrates like a binomial") {
  // 20^3 fully occupied voxels: the erased fraction of a Binomial(8000, .5)
  // draw stays within 0.015 of one half with overwhelming margin.
  LabelGrid grid;
  grid.spec = cube_spec(20);
  grid.labels.assign(static_cast<std::size_t>(grid.spec.voxel_count()), 2);

  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    std::mt19937_64 rng = make_rng(seed, "binomial");
    PerturbRecord rec;
    const LabelGrid out = perturb_geometric(grid, 0.5, rng, &rec);
    CHECK(rec.candidates == grid.spec.voxel_count());
    const double frac =
        static_cast<double>(rec.changed) / static_cast<double>(rec.candidates);
    CHECK(std::abs(frac - 0.5) < 0.015);
    // Record agrees with the actual diff.
    std::int64_t erased = 0;
    for (std::size_t i = 0; i < out.labels.size(); ++i)
      if (out.labels[i] != grid.labels[i]) erased++;
    CHECK(erased == rec.changed);
  }
}

TEST_CASE("geometric erase only turns occupied voxels into empty ones") {
  std::mt19937_64 data_rng(2);
  std::mt19937_64 rng = make_rng(5, "onlydown");
  std::uniform_real_distribution<double> pu(0.05, 0.95);
  for (int trial = 0; trial < 30; ++trial) {
    const LabelGrid grid = mixed_grid(data_rng, 8, 6, 0.5);
    const LabelGrid out = perturb_geometric(grid, pu(rng), rng);
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
      const std::uint8_t before = grid.labels[i], after = out.labels[i];
      if (after != before) {
        CHECK(before != 0);
        CHECK(before != kIgnoreLabel);
        CHECK(after == 0);
      }
    }
  }
}

TEST_CASE("per-trial erased fractions average to the erase probability") {
  std::mt19937_64 data_rng(3);
  const LabelGrid grid = mixed_grid(data_rng, 10, 4, 0.55);
  const double p = 0.37;
  std::mt19937_64 rng = make_rng(17, "meanfrac");
  double sum = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    PerturbRecord rec;
    perturb_geometric(grid, p, rng, &rec);
    sum += static_cast<double>(rec.changed) / static_cast<double>(rec.candidates);
  }
  CHECK(std::abs(sum / trials - p) < 0.01);
}

TEST_CASE("semantic shuffle preserves occupancy and stays inside the label range") {
  std::mt19937_64 data_rng(4);
  std::mt19937_64 rng = make_rng(7, "occupancy");
  const int classes = 6;
  for (int trial = 0; trial < 200; ++trial) {
    const LabelGrid grid = mixed_grid(data_rng, 6, classes, 0.5);
    PerturbRecord rec;
    const LabelGrid out = perturb_semantic(grid, classes, 0.3, 0.9, rng, &rec);
    REQUIRE(out.labels.size() == grid.labels.size());
    std::int64_t changed = 0;
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
      const std::uint8_t before = grid.labels[i], after = out.labels[i];
      if (before == 0 || before == kIgnoreLabel) {
        CHECK(after == before);  // empty and ignored voxels never move
        continue;
      }
      CHECK(after != 0);  // occupancy is preserved
      CHECK(after != kIgnoreLabel);
      CHECK(after <= classes);
      if (after != before) {
        changed++;
        // The source category must be one of the picked ones, and the new
        // label must be its recorded replacement.
        bool found = false;
        for (std::size_t j = 0; j < rec.categories.size(); ++j) {
          if (rec.categories[j] == before) {
            found = true;
            CHECK(after == rec.targets[j]);
          }
        }
        CHECK(found);
      }
    }
    CHECK(changed == rec.changed);
    CHECK(rec.kind == "semantic");
  }
}

TEST_CASE("a single-category grid comes back unchanged with an empty record") {
  LabelGrid grid;
  grid.spec = cube_spec(5);
  grid.labels.assign(static_cast<std::size_t>(grid.spec.voxel_count()), 0);
  // Only class 3 is present.
  for (std::size_t i = 0; i < grid.labels.size(); i += 3) grid.labels[i] = 3;

  std::mt19937_64 rng = make_rng(9, "single");
  for (int trial = 0; trial < 50; ++trial) {
    PerturbRecord rec;
    const LabelGrid out = perturb_semantic(grid, 8, 0.1, 0.9, rng, &rec);
    CHECK(out.labels == grid.labels);
    CHECK(rec.categories.empty());
    CHECK(rec.changed == 0);
  }
}

TEST_CASE("an empty grid is untouched by both corruptions") {
  LabelGrid grid;
  grid.spec = cube_spec(4);
  grid.labels.assign(static_cast<std::size_t>(grid.spec.voxel_count()), 0);
  std::mt19937_64 rng = make_rng(10, "empty");
  PerturbRecord rec;
  CHECK(perturb_geometric(grid, 0.8, rng, &rec).labels == grid.labels);
  CHECK(rec.candidates == 0);
  CHECK(perturb_semantic(grid, 5, 0.1, 0.9, rng, &rec).labels == grid.labels);
  CHECK(rec.changed == 0);
}

TEST_CASE("picked categories are distinct, present, and mapped off themselves") {
  std::mt19937_64 data_rng(5);
  std::mt19937_64 rng = make_rng(11, "picks");
  const int classes = 7;
  for (int trial = 0; trial < 100; ++trial) {
    const LabelGrid grid = mixed_grid(data_rng, 6, classes, 0.45);
    std::set<int> present;
    for (std::uint8_t l : grid.labels)
      if (l != 0 && l != kIgnoreLabel) present.insert(l);
    if (present.size() < 2) continue;

    PerturbRecord rec;
    perturb_semantic(grid, classes, 0.2, 0.8, rng, &rec);
    CHECK(rec.categories.size() >= 1);
    CHECK(rec.categories.size() <= present.size());
    std::set<int> seen;
    for (std::size_t j = 0; j < rec.categories.size(); ++j) {
      const int c = rec.categories[j];
      CHECK(present.count(c) == 1);
      CHECK(seen.insert(c).second);  // no duplicates
      CHECK(rec.targets[j] >= 1);
      CHECK(rec.targets[j] <= classes);
      CHECK(rec.targets[j] != c);
      CHECK(rec.probs[j] >= 0.2);
      CHECK(rec.probs[j] <= 0.8);
    }
  }
}

TEST_CASE("flip probability one remaps every voxel of the picked categories") {
  std::mt19937_64 data_rng(6);
  std::mt19937_64 rng = make_rng(13, "fullremap");
  const int classes = 5;
  int full_remaps_seen = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const LabelGrid grid = mixed_grid(data_rng, 6, classes, 0.5);
    std::set<int> present;
    for (std::uint8_t l : grid.labels)
      if (l != 0 && l != kIgnoreLabel) present.insert(l);
    if (present.size() < 2) continue;

    PerturbRecord rec;
    const LabelGrid out = perturb_semantic(grid, classes, 1.0, 1.0, rng, &rec);

    // With the flip probability pinned to one, the output is a pure function
    // of the recorded category-to-target map: picked categories remap
    // exhaustively, everything else stays.
    std::vector<int> target_of(classes + 1, 0);
    for (std::size_t j = 0; j < rec.categories.size(); ++j) {
      target_of[static_cast<std::size_t>(rec.categories[j])] = rec.targets[j];
      CHECK(rec.probs[j] == 1.0);
    }
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
      const std::uint8_t before = grid.labels[i];
      if (before == 0 || before == kIgnoreLabel) {
        CHECK(out.labels[i] == before);
      } else if (target_of[before] != 0) {
        CHECK(out.labels[i] == target_of[before]);
      } else {
        CHECK(out.labels[i] == before);
      }
    }

    // When every present category was picked, the remap covers the whole
    // occupied set and the record says so.
    if (rec.categories.size() == present.size()) {
      full_remaps_seen++;
      CHECK(rec.changed == rec.candidates);
    }
  }
  // The category count is drawn uniformly, so full remaps show up often.
  CHECK(full_remaps_seen > 3);
}

TEST_CASE("equal probability bounds pin the drawn flip probability") {
  std::mt19937_64 data_rng(7);
  const LabelGrid grid = mixed_grid(data_rng, 6, 4, 0.5);
  std::mt19937_64 rng = make_rng(15, "pinned");
  PerturbRecord rec;
  perturb_semantic(grid, 4, 0.6, 0.6, rng, &rec);
  for (double p : rec.probs) CHECK(p == 0.6);
}

TEST_CASE("identical engine state reproduces identical corruptions") {
  std::mt19937_64 data_rng(8);
  const LabelGrid grid = mixed_grid(data_rng, 8, 6, 0.5);

  std::mt19937_64 a = make_rng(21, "repro");
  std::mt19937_64 b = make_rng(21, "repro");
  const LabelGrid ga = perturb_geometric(grid, 0.4, a);
  const LabelGrid gb = perturb_geometric(grid, 0.4, b);
  CHECK(ga.labels == gb.labels);
  const LabelGrid sa = perturb_semantic(grid, 6, 0.1, 0.9, a);
  const LabelGrid sb = perturb_semantic(grid, 6, 0.1, 0.9, b);
  CHECK(sa.labels == sb.labels);
}

TEST_CASE("perturbation records serialize with their kind and tallies") {
  std::mt19937_64 data_rng(9);
  const LabelGrid grid = mixed_grid(data_rng, 6, 4, 0.5);
  std::mt19937_64 rng = make_rng(23, "json");
  PerturbRecord rec;
  perturb_geometric(grid, 0.3, rng, &rec);
  nlohmann::json j = rec;
  CHECK(j.at("kind") == "geometric");
  CHECK(j.at("p").get<double>() == 0.3);
  CHECK(j.at("candidates").get<std::int64_t>() == rec.candidates);
  CHECK(j.at("changed").get<std::int64_t>() == rec.changed);
}
