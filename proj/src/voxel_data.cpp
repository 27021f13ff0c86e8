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

#include "ammnet/voxel_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ammnet/rng.hpp"

namespace ammnet {

namespace {

constexpr double kRayNudge = 1e-6;

bool project_center(const CameraIntrinsics& cam, const std::array<double, 3>& p,
                    int* u, int* v) {
  if (p[2] <= 0.0) return false;
  const double uf = cam.fx * p[0] / p[2] + cam.cx;
  const double vf = cam.fy * p[1] / p[2] + cam.cy;
  const int ui = static_cast<int>(std::floor(uf));
  const int vi = static_cast<int>(std::floor(vf));
  if (ui < 0 || ui >= cam.width || vi < 0 || vi >= cam.height) return false;
  *u = ui;
  *v = vi;
  return true;
}

}  // namespace

void GridSpec::validate() const {
  AMM_CHECK(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrCode::kInvalidArgument,
            "grid dims must be positive, got (" << dims[0] << ", " << dims[1] << ", "
                                                << dims[2] << ")");
  AMM_CHECK(voxel_size > 0.0, ErrCode::kInvalidArgument,
            "voxel size must be positive, got " << voxel_size);
}

void CameraIntrinsics::validate() const {
  AMM_CHECK(fx > 0.0 && fy > 0.0, ErrCode::kInvalidArgument,
            "focal lengths must be positive, got fx=" << fx << " fy=" << fy);
  AMM_CHECK(width > 0 && height > 0, ErrCode::kInvalidArgument,
            "image size must be positive, got " << width << "x" << height);
}

void LabelGrid::validate() const {
  spec.validate();
  AMM_CHECK(static_cast<std::int64_t>(labels.size()) == spec.voxel_count(),
            ErrCode::kShapeMismatch,
            "label grid holds " << labels.size() << " entries for "
                                << spec.voxel_count() << " voxels");
}

void TsdfGrid::validate() const {
  spec.validate();
  AMM_CHECK(static_cast<std::int64_t>(values.size()) == spec.voxel_count(),
            ErrCode::kShapeMismatch,
            "tsdf grid holds " << values.size() << " entries for "
                               << spec.voxel_count() << " voxels");
}

std::int64_t EvalMask::count(MaskState s) const {
  return std::count(states.begin(), states.end(), s);
}

TsdfGrid tsdf_from_depth(const DepthImage& depth, const CameraIntrinsics& cam,
                         const GridSpec& grid, double trunc) {
  grid.validate();
  cam.validate();
  AMM_CHECK(depth.width == cam.width && depth.height == cam.height, ErrCode::kShapeMismatch,
            "depth image is " << depth.width << "x" << depth.height << " but camera expects "
                              << cam.width << "x" << cam.height);
  AMM_CHECK(trunc > 0.0, ErrCode::kInvalidArgument,
            "truncation distance must be positive, got " << trunc);

  TsdfGrid out;
  out.spec = grid;
  out.values.assign(static_cast<std::size_t>(grid.voxel_count()), 1.0f);

  std::int64_t idx = 0;
  for (int i = 0; i < grid.dims[0]; ++i) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int k = 0; k < grid.dims[2]; ++k, ++idx) {
        const auto p = grid.center(i, j, k);
        int u, v;
        if (!project_center(cam, p, &u, &v)) continue;
        const double dobs = depth.at(u, v);
        if (dobs <= 0.0) continue;
        // Signed distance along the viewing ray: the ray through the voxel
        // center hits the observed surface at range |p| * dobs / p.z, and
        // the voxel center sits at range |p|.
        const double range = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        const double sd = range * (dobs - p[2]) / p[2];
        const double n = std::clamp(sd / trunc, -1.0, 1.0);
        out.values[static_cast<std::size_t>(idx)] = static_cast<float>(n);
      }
    }
  }
  return out;
}

ProjectionMap build_projection_map(const DepthImage& depth, const CameraIntrinsics& cam,
                                   const GridSpec& grid) {
  grid.validate();
  cam.validate();
  AMM_CHECK(depth.width == cam.width && depth.height == cam.height, ErrCode::kShapeMismatch,
            "depth image is " << depth.width << "x" << depth.height << " but camera expects "
                              << cam.width << "x" << cam.height);

  ProjectionMap map;
  map.width = cam.width;
  map.height = cam.height;
  map.spec = grid;
  map.voxel_of_pixel.assign(static_cast<std::size_t>(cam.width) * cam.height, -1);

  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const double dobs = depth.at(u, v);
      if (dobs <= 0.0) continue;
      const double dx = (u + 0.5 - cam.cx) / cam.fx;
      const double dy = (v + 0.5 - cam.cy) / cam.fy;
      // Surface points land exactly on voxel faces, so nudge a little
      // further along the ray to fall inside the voxel behind the face.
      const double z = dobs + kRayNudge;
      const double px = dx * z;
      const double py = dy * z;
      const int i = static_cast<int>(std::floor((px - grid.origin[0]) / grid.voxel_size));
      const int j = static_cast<int>(std::floor((py - grid.origin[1]) / grid.voxel_size));
      const int k = static_cast<int>(std::floor((z - grid.origin[2]) / grid.voxel_size));
      if (!grid.contains(i, j, k)) continue;
      map.voxel_of_pixel[static_cast<std::size_t>(v) * cam.width + u] = grid.linear(i, j, k);
    }
  }
  return map;
}

EvalMask compute_eval_mask(const DepthImage& depth, const CameraIntrinsics& cam,
                           const GridSpec& grid) {
  const ProjectionMap map = build_projection_map(depth, cam, grid);

  EvalMask mask;
  mask.spec = grid;
  mask.states.assign(static_cast<std::size_t>(grid.voxel_count()), MaskState::kOutside);

  // Voxels that received a surface point are visible regardless of how
  // their center relates to the depth sample.
  for (std::int64_t vox : map.voxel_of_pixel) {
    if (vox >= 0) mask.states[static_cast<std::size_t>(vox)] = MaskState::kVisible;
  }

  std::int64_t idx = 0;
  for (int i = 0; i < grid.dims[0]; ++i) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int k = 0; k < grid.dims[2]; ++k, ++idx) {
        if (mask.states[static_cast<std::size_t>(idx)] == MaskState::kVisible) continue;
        const auto p = grid.center(i, j, k);
        int u, v;
        if (!project_center(cam, p, &u, &v)) continue;
        const double dobs = depth.at(u, v);
        if (dobs <= 0.0) continue;
        if (p[2] > dobs) mask.states[static_cast<std::size_t>(idx)] = MaskState::kOccluded;
      }
    }
  }
  return mask;
}

ProjectedFeatures project_features(const Tensor& feat_quarter, const ProjectionMap& map) {
  AMM_CHECK(feat_quarter.rank() == 3, ErrCode::kShapeMismatch,
            "expected (channels, rows, cols) features, got rank " << feat_quarter.rank());
  AMM_CHECK(feat_quarter.dim(1) * 4 == map.height && feat_quarter.dim(2) * 4 == map.width,
            ErrCode::kShapeMismatch,
            "feature plane " << feat_quarter.shape_str() << " does not quarter the "
                             << map.width << "x" << map.height << " image");

  const int channels = feat_quarter.dim(0);
  const auto& dims = map.spec.dims;
  const std::int64_t voxels = map.spec.voxel_count();

  ProjectedFeatures out;
  out.volume = Tensor({channels, dims[0], dims[1], dims[2]});
  out.counts.assign(static_cast<std::size_t>(voxels), 0);

  for (int v = 0; v < map.height; ++v) {
    for (int u = 0; u < map.width; ++u) {
      const std::int64_t vox = map.voxel_of_pixel[static_cast<std::size_t>(v) * map.width + u];
      if (vox < 0) continue;
      out.counts[static_cast<std::size_t>(vox)]++;
      const int fr = v / 4;
      const int fc = u / 4;
      for (int c = 0; c < channels; ++c) {
        out.volume[static_cast<std::int64_t>(c) * voxels + vox] += feat_quarter.at(c, fr, fc);
      }
    }
  }

  for (std::int64_t vox = 0; vox < voxels; ++vox) {
    const std::int32_t n = out.counts[static_cast<std::size_t>(vox)];
    if (n <= 1) continue;
    const double inv = 1.0 / n;
    for (int c = 0; c < channels; ++c) {
      out.volume[static_cast<std::int64_t>(c) * voxels + vox] *= inv;
    }
  }
  return out;
}

Tensor project_features_backward(const Tensor& grad_volume, const ProjectionMap& map,
                                 const std::vector<std::int32_t>& counts,
                                 int feat_h, int feat_w) {
  AMM_CHECK(grad_volume.rank() == 4, ErrCode::kShapeMismatch,
            "expected (channels, x, y, z) gradient, got rank " << grad_volume.rank());
  const auto& dims = map.spec.dims;
  AMM_CHECK(grad_volume.dim(1) == dims[0] && grad_volume.dim(2) == dims[1] &&
                grad_volume.dim(3) == dims[2],
            ErrCode::kShapeMismatch,
            "gradient volume " << grad_volume.shape_str() << " does not match the grid");
  AMM_CHECK(static_cast<std::int64_t>(counts.size()) == map.spec.voxel_count(),
            ErrCode::kShapeMismatch, "counts do not match the grid");

  const int channels = grad_volume.dim(0);
  const std::int64_t voxels = map.spec.voxel_count();
  Tensor grad_feat({channels, feat_h, feat_w});

  for (int v = 0; v < map.height; ++v) {
    for (int u = 0; u < map.width; ++u) {
      const std::int64_t vox = map.voxel_of_pixel[static_cast<std::size_t>(v) * map.width + u];
      if (vox < 0) continue;
      const double inv = 1.0 / counts[static_cast<std::size_t>(vox)];
      const int fr = v / 4;
      const int fc = u / 4;
      for (int c = 0; c < channels; ++c) {
        grad_feat.at(c, fr, fc) += grad_volume[static_cast<std::int64_t>(c) * voxels + vox] * inv;
      }
    }
  }
  return grad_feat;
}

bool cast_ray(const LabelGrid& grid, const CameraIntrinsics& cam, int u, int v, RayHit* hit) {
  const auto& spec = grid.spec;
  const double dx = (u + 0.5 - cam.cx) / cam.fx;
  const double dy = (v + 0.5 - cam.cy) / cam.fy;
  // Parameterize the ray by planar depth z: position(z) = (dx*z, dy*z, z).

  const double lox = spec.origin[0], hix = spec.origin[0] + spec.dims[0] * spec.voxel_size;
  const double loy = spec.origin[1], hiy = spec.origin[1] + spec.dims[1] * spec.voxel_size;
  const double loz = spec.origin[2], hiz = spec.origin[2] + spec.dims[2] * spec.voxel_size;

  double z_lo = std::max(loz, 1e-9);
  double z_hi = hiz;
  auto clip_axis = [&](double d, double lo, double hi) {
    if (d > 0.0) {
      z_lo = std::max(z_lo, lo / d);
      z_hi = std::min(z_hi, hi / d);
    } else if (d < 0.0) {
      z_lo = std::max(z_lo, hi / d);
      z_hi = std::min(z_hi, lo / d);
    } else if (0.0 < lo || 0.0 > hi) {
      z_hi = -1.0;  // ray never inside this slab
    }
  };
  clip_axis(dx, lox, hix);
  clip_axis(dy, loy, hiy);
  if (z_lo >= z_hi) return false;

  // Start just inside the entry face.
  const double z0 = z_lo + 1e-12 * std::max(1.0, z_lo);
  int i = static_cast<int>(std::floor((dx * z0 - lox) / spec.voxel_size));
  int j = static_cast<int>(std::floor((dy * z0 - loy) / spec.voxel_size));
  int k = static_cast<int>(std::floor((z0 - loz) / spec.voxel_size));
  i = std::clamp(i, 0, spec.dims[0] - 1);
  j = std::clamp(j, 0, spec.dims[1] - 1);
  k = std::clamp(k, 0, spec.dims[2] - 1);

  const double inf = std::numeric_limits<double>::infinity();
  const int step_i = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
  const int step_j = dy > 0.0 ? 1 : (dy < 0.0 ? -1 : 0);

  auto next_x = [&](int ii) {
    if (step_i == 0) return inf;
    const double boundary = lox + (ii + (step_i > 0 ? 1 : 0)) * spec.voxel_size;
    return boundary / dx;
  };
  auto next_y = [&](int jj) {
    if (step_j == 0) return inf;
    const double boundary = loy + (jj + (step_j > 0 ? 1 : 0)) * spec.voxel_size;
    return boundary / dy;
  };
  auto next_z = [&](int kk) { return loz + (kk + 1) * spec.voxel_size; };

  double z_cur = z_lo;
  double zx = next_x(i), zy = next_y(j), zz = next_z(k);
  while (true) {
    const std::uint8_t label = grid.labels[static_cast<std::size_t>(spec.linear(i, j, k))];
    if (label != 0 && label != kIgnoreLabel) {
      if (hit) {
        hit->depth = z_cur;
        hit->voxel = {i, j, k};
        hit->label = label;
      }
      return true;
    }
    // Advance into the neighbor across the nearest face.
    if (zx <= zy && zx <= zz) {
      z_cur = zx;
      i += step_i;
      if (i < 0 || i >= spec.dims[0]) return false;
      zx = next_x(i);
    } else if (zy <= zz) {
      z_cur = zy;
      j += step_j;
      if (j < 0 || j >= spec.dims[1]) return false;
      zy = next_y(j);
    } else {
      z_cur = zz;
      k += 1;
      if (k >= spec.dims[2]) return false;
      zz = next_z(k);
    }
    if (z_cur > z_hi + 1e-12) return false;
  }
}

void SceneGenConfig::validate() const {
  grid.validate();
  cam.validate();
  AMM_CHECK(grid.dims[0] >= 6 && grid.dims[1] >= 4 && grid.dims[2] >= 6,
            ErrCode::kInvalidArgument,
            "scene generation needs a grid of at least 6x4x6 voxels, got ("
                << grid.dims[0] << ", " << grid.dims[1] << ", " << grid.dims[2] << ")");
  AMM_CHECK(classes >= 2 && classes <= 254, ErrCode::kInvalidArgument,
            "class count must be in [2, 254], got " << classes);
  AMM_CHECK(trunc > 0.0, ErrCode::kInvalidArgument,
            "truncation distance must be positive, got " << trunc);
  AMM_CHECK(min_boxes >= 0 && max_boxes >= min_boxes, ErrCode::kInvalidArgument,
            "box count range [" << min_boxes << ", " << max_boxes << "] is invalid");
  AMM_CHECK(wall_prob >= 0.0 && wall_prob <= 1.0, ErrCode::kInvalidArgument,
            "wall probability must be in [0, 1], got " << wall_prob);
}

SceneGenConfig default_scene_config() {
  SceneGenConfig cfg;
  cfg.grid.dims = {20, 12, 20};
  cfg.grid.voxel_size = 0.1;
  cfg.grid.origin = {-1.0, -0.6, 1.0};
  cfg.cam.fx = 32.0;
  cfg.cam.fy = 32.0;
  cfg.cam.cx = 32.0;
  cfg.cam.cy = 32.0;
  cfg.cam.width = 64;
  cfg.cam.height = 64;
  cfg.classes = 11;
  cfg.trunc = 0.3;
  cfg.min_boxes = 2;
  cfg.max_boxes = 4;
  cfg.wall_prob = 0.5;
  return cfg;
}

namespace {

// Deterministic palette: classes get well-separated hues so color carries
// semantic information the geometry branch does not have.
std::array<double, 3> class_albedo(int label, int classes) {
  const double h = 6.2831853071795864769 * label / (classes + 1);
  return {0.5 + 0.45 * std::sin(h),
          0.5 + 0.45 * std::sin(h + 2.0943951023931953),
          0.5 + 0.45 * std::sin(h + 4.1887902047863905)};
}

}  // namespace

SceneSample gen_synthetic_scene(const SceneGenConfig& config, std::uint64_t seed,
                                std::uint64_t index) {
  config.validate();
  const auto& dims = config.grid.dims;

  SceneSample sample;
  sample.seed = seed;
  sample.index = index;
  sample.labels.spec = config.grid;
  sample.labels.labels.assign(static_cast<std::size_t>(config.grid.voxel_count()), 0);

  auto layout = make_rng(seed, "scene-layout", index);
  auto set_box = [&](int x0, int y0, int z0, int sx, int sy, int sz, std::uint8_t label) {
    for (int i = x0; i < x0 + sx; ++i) {
      for (int j = y0; j < y0 + sy; ++j) {
        for (int k = z0; k < z0 + sz; ++k) {
          sample.labels.labels[static_cast<std::size_t>(config.grid.linear(i, j, k))] = label;
        }
      }
    }
  };

  // Floor spans the whole bottom layer.
  set_box(0, 0, 0, dims[0], 1, dims[2], 1);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> class_draw(2, config.classes);
  if (unit(layout) < config.wall_prob) {
    std::uniform_int_distribution<int> wall_height(dims[1] / 2, dims[1]);
    const int h = wall_height(layout);
    set_box(0, 0, dims[2] - 1, dims[0], h, 1, static_cast<std::uint8_t>(class_draw(layout)));
  }

  std::uniform_int_distribution<int> box_count(config.min_boxes, config.max_boxes);
  const int boxes = box_count(layout);
  // Keep a clear band in front of the camera so objects stay separated from
  // the near grid face and partially occlude each other.
  const int z_front = std::max(1, dims[2] / 4);
  for (int b = 0; b < boxes; ++b) {
    const std::uint8_t label = static_cast<std::uint8_t>(class_draw(layout));
    std::uniform_int_distribution<int> sx_draw(2, std::min(6, dims[0] - 1));
    std::uniform_int_distribution<int> sy_draw(2, std::min(8, dims[1] - 1));
    std::uniform_int_distribution<int> sz_draw(2, std::min(6, std::max(2, dims[2] - z_front - 1)));
    const int sx = sx_draw(layout);
    const int sy = sy_draw(layout);
    const int sz = sz_draw(layout);
    std::uniform_int_distribution<int> x_draw(0, dims[0] - sx);
    std::uniform_int_distribution<int> z_draw(z_front, dims[2] - sz);
    const int x0 = x_draw(layout);
    const int z0 = z_draw(layout);
    set_box(x0, 1, z0, sx, sy, sz, label);
  }

  // Render depth, color, and the per-pixel semantic image from the volume.
  sample.depth.width = config.cam.width;
  sample.depth.height = config.cam.height;
  sample.depth.values.assign(static_cast<std::size_t>(config.cam.width) * config.cam.height, 0.0f);
  sample.semantic2d.width = config.cam.width;
  sample.semantic2d.height = config.cam.height;
  sample.semantic2d.values.assign(sample.depth.values.size(), 0);
  sample.rgb.width = config.cam.width;
  sample.rgb.height = config.cam.height;
  sample.rgb.values.assign(sample.depth.values.size() * 3, 0.0f);

  auto noise = make_rng(seed, "scene-noise", index);
  std::normal_distribution<double> pixel_noise(0.0, 1.0);
  for (int v = 0; v < config.cam.height; ++v) {
    for (int u = 0; u < config.cam.width; ++u) {
      RayHit hit;
      std::array<double, 3> color{0.05, 0.05, 0.1};
      if (cast_ray(sample.labels, config.cam, u, v, &hit)) {
        sample.depth.at(u, v) = static_cast<float>(hit.depth);
        sample.semantic2d.values[static_cast<std::size_t>(v) * config.cam.width + u] = hit.label;
        const auto albedo = class_albedo(hit.label, config.classes);
        const double shade = 1.0 / (1.0 + 0.25 * hit.depth);
        color = {albedo[0] * shade, albedo[1] * shade, albedo[2] * shade};
      }
      for (int c = 0; c < 3; ++c) {
        const double value = std::clamp(color[c] + 0.02 * pixel_noise(noise), 0.0, 1.0);
        sample.rgb.at(c, u, v) = static_cast<float>(value);
      }
    }
  }

  sample.tsdf = tsdf_from_depth(sample.depth, config.cam, config.grid, config.trunc);
  sample.map = build_projection_map(sample.depth, config.cam, config.grid);
  sample.mask = compute_eval_mask(sample.depth, config.cam, config.grid);
  return sample;
}

}  // namespace ammnet
