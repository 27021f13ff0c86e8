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
#include <vector>

#include "ammnet/tensor.hpp"

namespace ammnet {

// Geometry conventions used throughout:
//  - The camera sits at the origin looking along +z, x right, y up.
//  - Pixel (u, v) casts its ray through the pixel center (u + 0.5, v + 0.5);
//    v grows with +y.
//  - Depth images store planar z-depth (the z coordinate of the surface
//    point, not ray length). A value <= 0 means the ray returned nothing.
//  - Voxel (i, j, k) spans [origin + (i,j,k)*vs, origin + (i+1,j+1,k+1)*vs)
//    with center at origin + (i+0.5, j+0.5, k+0.5)*vs.
//  - Label 0 is empty space, labels 1..C are semantic categories, and
//    kIgnoreLabel marks voxels excluded from losses and metrics.

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct GridSpec {
  std::array<int, 3> dims{0, 0, 0};  // (x, y, z) voxel counts
  double voxel_size = 0.0;
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  void validate() const;
  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }
  std::int64_t linear(int i, int j, int k) const {
    return (static_cast<std::int64_t>(i) * dims[1] + j) * dims[2] + k;
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
  }
  // Center of voxel (i, j, k) in camera coordinates.
  std::array<double, 3> center(int i, int j, int k) const {
    return {origin[0] + (i + 0.5) * voxel_size,
            origin[1] + (j + 0.5) * voxel_size,
            origin[2] + (k + 0.5) * voxel_size};
  }
};

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const;
};

struct LabelGrid {
  GridSpec spec;
  std::vector<std::uint8_t> labels;  // spec.voxel_count() entries

  void validate() const;
};

struct TsdfGrid {
  GridSpec spec;
  std::vector<float> values;  // normalized signed distances in [-1, 1]

  void validate() const;
};

struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> values;  // row-major, v * width + u

  float at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return values[static_cast<std::size_t>(v) * width + u]; }
};

struct RgbImage {
  int width = 0, height = 0;
  std::vector<float> values;  // channel-planar, (c * height + v) * width + u

  float at(int c, int u, int v) const {
    return values[(static_cast<std::size_t>(c) * height + v) * width + u];
  }
  float& at(int c, int u, int v) {
    return values[(static_cast<std::size_t>(c) * height + v) * width + u];
  }
};

struct LabelImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> values;  // row-major, class of first surface hit, 0 if none

  std::uint8_t at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
};

// Per-voxel visibility partition derived from one depth image. Every voxel
// lands in exactly one state.
enum class MaskState : std::uint8_t {
  kOutside = 0,   // out of frustum, observed-empty, or on a no-return ray
  kVisible = 1,   // contains an unprojected surface point
  kOccluded = 2,  // inside the frustum, strictly behind the observed surface
};

struct EvalMask {
  GridSpec spec;
  std::vector<MaskState> states;

  std::int64_t count(MaskState s) const;
};

// Maps every full-resolution pixel to the linear index of the voxel its
// surface point falls in, or -1 when the ray returned nothing or the point
// lies outside the grid.
struct ProjectionMap {
  int width = 0, height = 0;
  GridSpec spec;
  std::vector<std::int64_t> voxel_of_pixel;  // row-major, v * width + u
};

// Converts a depth image into a truncated signed distance grid. For each
// voxel center the observed depth is looked up at the pixel the center
// projects to; the signed distance along the viewing ray is scaled by
// 1 / trunc and clamped to [-1, 1]. Voxels outside the frustum and voxels
// on no-return rays get +1 (fully in front of any surface).
TsdfGrid tsdf_from_depth(const DepthImage& depth, const CameraIntrinsics& cam,
                         const GridSpec& grid, double trunc);

ProjectionMap build_projection_map(const DepthImage& depth, const CameraIntrinsics& cam,
                                   const GridSpec& grid);

EvalMask compute_eval_mask(const DepthImage& depth, const CameraIntrinsics& cam,
                           const GridSpec& grid);

// Scatters quarter-resolution image features into the voxel grid: each pixel
// with a mapped voxel contributes the feature column at (u / 4, v / 4), and
// voxels hit by several pixels average their contributions. The counts
// returned alongside the volume are needed by the backward pass.
struct ProjectedFeatures {
  Tensor volume;                     // (channels, x, y, z)
  std::vector<std::int32_t> counts;  // contributions per voxel
};

ProjectedFeatures project_features(const Tensor& feat_quarter, const ProjectionMap& map);

// Adjoint of project_features: gathers voxel gradients back onto the
// quarter-resolution feature plane, dividing by the same pixel counts.
Tensor project_features_backward(const Tensor& grad_volume, const ProjectionMap& map,
                                 const std::vector<std::int32_t>& counts,
                                 int feat_h, int feat_w);

// Casts the pixel ray through the label grid and reports the planar z-depth
// at which it first enters a non-empty voxel, the voxel indices, and the
// voxel's label. Returns false if the ray hits nothing.
struct RayHit {
  double depth = 0.0;
  std::array<int, 3> voxel{-1, -1, -1};
  std::uint8_t label = 0;
};

bool cast_ray(const LabelGrid& grid, const CameraIntrinsics& cam, int u, int v, RayHit* hit);

// Synthetic scene generation. Scenes are single-view rooms: a floor, an
// optional back wall, and a handful of axis-aligned boxes with distinct
// semantic classes. The full volume is labeled (including parts the camera
// cannot see), and the depth / color / semantic images are rendered from it.
struct SceneGenConfig {
  GridSpec grid;
  CameraIntrinsics cam;
  int classes = 11;     // semantic categories, labels 1..classes
  double trunc = 0.3;   // TSDF truncation distance in world units
  int min_boxes = 2;
  int max_boxes = 4;
  double wall_prob = 0.5;

  void validate() const;
};

// Desk-scale defaults: 20x12x20 grid at 0.1 m voxels, a 64x64 camera with a
// 90 degree field of view, 11 categories.
SceneGenConfig default_scene_config();

struct SceneSample {
  LabelGrid labels;
  TsdfGrid tsdf;
  DepthImage depth;
  RgbImage rgb;
  LabelImage semantic2d;
  ProjectionMap map;
  EvalMask mask;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

// Deterministic in (config, seed, index): equal arguments produce bitwise
// identical samples.
SceneSample gen_synthetic_scene(const SceneGenConfig& config, std::uint64_t seed,
                                std::uint64_t index);

}  // namespace ammnet
