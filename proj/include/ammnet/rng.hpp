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
#include <string_view>

namespace ammnet {

// All randomness in the project flows through named substreams derived from
// one root seed. Asking for the same (seed, name, index) pair always yields
// an identically seeded engine, so data generation, init, perturbation,
// augmentation and shuffling stay independent of each other and reproducible
// run to run.

// FNV-1a over the stream name mixed with the seed and index via
// splitmix64-style finalization.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view name,
                              std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (h ^ (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view name,
                                std::uint64_t index = 0) {
  return std::mt19937_64(mix_seed(seed, name, index));
}

}  // namespace ammnet
