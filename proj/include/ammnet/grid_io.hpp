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
#include <string>
#include <vector>

#include "ammnet/voxel_data.hpp"

namespace ammnet {

// Binary grid container (.ammv):
//   bytes 0..3   magic "AMMV"
//   byte  4      format version, currently 1
//   byte  5      dtype: 0 = uint8 labels, 1 = float32
//   bytes 6..7   reserved, zero
//   bytes 8..19  three little-endian uint32 dims (x, y, z)
//   payload      dims[0]*dims[1]*dims[2] elements, x-major with z fastest,
//                element ((x * dims[1] + y) * dims[2] + z)
// A 20x12x20 float32 grid is exactly 20 + 4 * 4800 = 19220 bytes.

inline constexpr std::uint8_t kGridDtypeU8 = 0;
inline constexpr std::uint8_t kGridDtypeF32 = 1;

struct F32Grid {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<float> values;
};

struct U8Grid {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<std::uint8_t> values;
};

void write_u8_grid(const std::string& path, const std::array<int, 3>& dims,
                   const std::vector<std::uint8_t>& values);
void write_f32_grid(const std::string& path, const std::array<int, 3>& dims,
                    const std::vector<float>& values);

U8Grid read_u8_grid(const std::string& path);
F32Grid read_f32_grid(const std::string& path);

// Scene bundles are directories holding one view of one scene:
//   gt.ammv     uint8 semantic labels over the full grid
//   tsdf.ammv   float32 truncated signed distances
//   depth.ammv  float32, dims (width, height, 1)
//   rgb.ammv    float32, dims (width, height, 3)
//   meta.json   camera intrinsics, grid placement, class count, truncation,
//               and the (seed, index) pair the scene was generated from
// The projection map, evaluation mask, and per-pixel semantic image are
// derived data and get recomputed on load.
void save_scene_bundle(const std::string& dir, const SceneSample& scene,
                       const SceneGenConfig& config);

struct LoadedScene {
  SceneSample sample;
  SceneGenConfig config;
};

LoadedScene load_scene_bundle(const std::string& dir);

}  // namespace ammnet
