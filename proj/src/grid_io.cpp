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

#include "ammnet/grid_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ammnet/error.hpp"

namespace ammnet {

namespace {

constexpr std::size_t kHeaderBytes = 20;
constexpr std::uint8_t kFormatVersion = 1;

void put_u32le(std::uint8_t* dst, std::uint32_t v) {
  dst[0] = static_cast<std::uint8_t>(v);
  dst[1] = static_cast<std::uint8_t>(v >> 8);
  dst[2] = static_cast<std::uint8_t>(v >> 16);
  dst[3] = static_cast<std::uint8_t>(v >> 24);
}

std::uint32_t get_u32le(const std::uint8_t* src) {
  return static_cast<std::uint32_t>(src[0]) | (static_cast<std::uint32_t>(src[1]) << 8) |
         (static_cast<std::uint32_t>(src[2]) << 16) | (static_cast<std::uint32_t>(src[3]) << 24);
}

void write_grid(const std::string& path, std::uint8_t dtype, const std::array<int, 3>& dims,
                const void* payload, std::size_t payload_bytes) {
  for (int d : dims) {
    AMM_CHECK(d > 0, ErrCode::kInvalidArgument, "grid dims must be positive, got " << d);
  }
  std::uint8_t header[kHeaderBytes] = {};
  header[0] = 'A';
  header[1] = 'M';
  header[2] = 'M';
  header[3] = 'V';
  header[4] = kFormatVersion;
  header[5] = dtype;
  put_u32le(header + 8, static_cast<std::uint32_t>(dims[0]));
  put_u32le(header + 12, static_cast<std::uint32_t>(dims[1]));
  put_u32le(header + 16, static_cast<std::uint32_t>(dims[2]));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "cannot open " << path << " for writing");
  out.write(reinterpret_cast<const char*>(header), kHeaderBytes);
  out.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
  out.flush();
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "write to " << path << " failed");
}

struct RawGrid {
  std::uint8_t dtype = 0;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<std::uint8_t> payload;
};

RawGrid read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  AMM_CHECK(in.good(), ErrCode::kIoFailure, "cannot open " << path << " for reading");

  std::uint8_t header[kHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kHeaderBytes);
  AMM_CHECK(in.gcount() == static_cast<std::streamsize>(kHeaderBytes), ErrCode::kTruncatedFile,
            path << " is shorter than the " << kHeaderBytes << " byte header");
  AMM_CHECK(std::memcmp(header, "AMMV", 4) == 0, ErrCode::kBadMagic,
            path << " does not start with the AMMV magic");
  AMM_CHECK(header[4] == kFormatVersion, ErrCode::kBadVersion,
            path << " has format version " << int(header[4]) << ", expected "
                 << int(kFormatVersion));
  AMM_CHECK(header[5] == kGridDtypeU8 || header[5] == kGridDtypeF32, ErrCode::kBadDtype,
            path << " has unknown dtype " << int(header[5]));

  RawGrid raw;
  raw.dtype = header[5];
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t d = get_u32le(header + 8 + 4 * a);
    AMM_CHECK(d > 0 && d <= (1u << 24), ErrCode::kTruncatedFile,
              path << " has implausible dim " << d);
    raw.dims[static_cast<std::size_t>(a)] = static_cast<int>(d);
  }

  const std::size_t count = static_cast<std::size_t>(raw.dims[0]) * raw.dims[1] * raw.dims[2];
  const std::size_t elem = raw.dtype == kGridDtypeU8 ? 1 : 4;
  raw.payload.resize(count * elem);
  in.read(reinterpret_cast<char*>(raw.payload.data()),
          static_cast<std::streamsize>(raw.payload.size()));
  AMM_CHECK(in.gcount() == static_cast<std::streamsize>(raw.payload.size()),
            ErrCode::kTruncatedFile,
            path << " payload is short: expected " << raw.payload.size() << " bytes");
  char extra;
  in.read(&extra, 1);
  AMM_CHECK(in.eof(), ErrCode::kTruncatedFile, path << " has trailing bytes after the payload");
  return raw;
}

}  // namespace

void write_u8_grid(const std::string& path, const std::array<int, 3>& dims,
                   const std::vector<std::uint8_t>& values) {
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  AMM_CHECK(values.size() == count, ErrCode::kShapeMismatch,
            "payload holds " << values.size() << " values but dims need " << count);
  write_grid(path, kGridDtypeU8, dims, values.data(), values.size());
}

void write_f32_grid(const std::string& path, const std::array<int, 3>& dims,
                    const std::vector<float>& values) {
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  AMM_CHECK(values.size() == count, ErrCode::kShapeMismatch,
            "payload holds " << values.size() << " values but dims need " << count);
  write_grid(path, kGridDtypeF32, dims, values.data(), values.size() * sizeof(float));
}

U8Grid read_u8_grid(const std::string& path) {
  RawGrid raw = read_grid(path);
  AMM_CHECK(raw.dtype == kGridDtypeU8, ErrCode::kBadDtype,
            path << " holds dtype " << int(raw.dtype) << ", expected uint8");
  U8Grid grid;
  grid.dims = raw.dims;
  grid.values = std::move(raw.payload);
  return grid;
}

F32Grid read_f32_grid(const std::string& path) {
  RawGrid raw = read_grid(path);
  AMM_CHECK(raw.dtype == kGridDtypeF32, ErrCode::kBadDtype,
            path << " holds dtype " << int(raw.dtype) << ", expected float32");
  F32Grid grid;
  grid.dims = raw.dims;
  grid.values.resize(raw.payload.size() / sizeof(float));
  std::memcpy(grid.values.data(), raw.payload.data(), raw.payload.size());
  return grid;
}

void save_scene_bundle(const std::string& dir, const SceneSample& scene,
                       const SceneGenConfig& config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  AMM_CHECK(!ec, ErrCode::kIoFailure, "cannot create directory " << dir << ": " << ec.message());

  scene.labels.validate();
  scene.tsdf.validate();
  const auto& dims = config.grid.dims;

  write_u8_grid(dir + "/gt.ammv", dims, scene.labels.labels);
  write_f32_grid(dir + "/tsdf.ammv", dims, scene.tsdf.values);

  // Images reuse the grid container with (width, height, channels) dims.
  const int w = scene.depth.width;
  const int h = scene.depth.height;
  std::vector<float> depth_payload(static_cast<std::size_t>(w) * h);
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) {
      depth_payload[static_cast<std::size_t>(u) * h + v] = scene.depth.at(u, v);
    }
  }
  write_f32_grid(dir + "/depth.ammv", {w, h, 1}, depth_payload);

  std::vector<float> rgb_payload(static_cast<std::size_t>(w) * h * 3);
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) {
      for (int c = 0; c < 3; ++c) {
        rgb_payload[(static_cast<std::size_t>(u) * h + v) * 3 + c] = scene.rgb.at(c, u, v);
      }
    }
  }
  write_f32_grid(dir + "/rgb.ammv", {w, h, 3}, rgb_payload);

  nlohmann::json meta;
  meta["camera"] = {{"fx", config.cam.fx},   {"fy", config.cam.fy},
                    {"cx", config.cam.cx},   {"cy", config.cam.cy},
                    {"width", config.cam.width}, {"height", config.cam.height}};
  meta["grid"] = {{"dims", {dims[0], dims[1], dims[2]}},
                  {"voxel_size", config.grid.voxel_size},
                  {"origin", {config.grid.origin[0], config.grid.origin[1], config.grid.origin[2]}}};
  meta["classes"] = config.classes;
  meta["trunc"] = config.trunc;
  meta["seed"] = scene.seed;
  meta["index"] = scene.index;

  std::ofstream out(dir + "/meta.json");
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "cannot open " << dir << "/meta.json for writing");
  out << meta.dump(2) << "\n";
  out.flush();
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "write to " << dir << "/meta.json failed");
}

LoadedScene load_scene_bundle(const std::string& dir) {
  std::ifstream meta_in(dir + "/meta.json");
  AMM_CHECK(meta_in.good(), ErrCode::kIoFailure, "cannot open " << dir << "/meta.json");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw AmmError(ErrCode::kBadConfig, dir + "/meta.json is not valid JSON: " + e.what());
  }

  LoadedScene loaded;
  SceneGenConfig& config = loaded.config;
  try {
    config.cam.fx = meta.at("camera").at("fx").get<double>();
    config.cam.fy = meta.at("camera").at("fy").get<double>();
    config.cam.cx = meta.at("camera").at("cx").get<double>();
    config.cam.cy = meta.at("camera").at("cy").get<double>();
    config.cam.width = meta.at("camera").at("width").get<int>();
    config.cam.height = meta.at("camera").at("height").get<int>();
    const auto& jd = meta.at("grid").at("dims");
    config.grid.dims = {jd.at(0).get<int>(), jd.at(1).get<int>(), jd.at(2).get<int>()};
    config.grid.voxel_size = meta.at("grid").at("voxel_size").get<double>();
    const auto& jo = meta.at("grid").at("origin");
    config.grid.origin = {jo.at(0).get<double>(), jo.at(1).get<double>(), jo.at(2).get<double>()};
    config.classes = meta.at("classes").get<int>();
    config.trunc = meta.at("trunc").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw AmmError(ErrCode::kBadConfig, dir + "/meta.json is missing fields: " + e.what());
  }
  config.validate();

  SceneSample& sample = loaded.sample;
  sample.seed = meta.value("seed", 0ull);
  sample.index = meta.value("index", 0ull);

  U8Grid gt = read_u8_grid(dir + "/gt.ammv");
  AMM_CHECK(gt.dims == config.grid.dims, ErrCode::kShapeMismatch,
            dir << "/gt.ammv dims do not match meta.json");
  sample.labels.spec = config.grid;
  sample.labels.labels = std::move(gt.values);
  for (std::uint8_t label : sample.labels.labels) {
    AMM_CHECK(label == kIgnoreLabel || label <= config.classes, ErrCode::kBadLabel,
              dir << "/gt.ammv holds label " << int(label) << " outside [0, "
                  << config.classes << "]");
  }

  F32Grid tsdf = read_f32_grid(dir + "/tsdf.ammv");
  AMM_CHECK(tsdf.dims == config.grid.dims, ErrCode::kShapeMismatch,
            dir << "/tsdf.ammv dims do not match meta.json");
  sample.tsdf.spec = config.grid;
  sample.tsdf.values = std::move(tsdf.values);

  const int w = config.cam.width;
  const int h = config.cam.height;
  F32Grid depth = read_f32_grid(dir + "/depth.ammv");
  AMM_CHECK(depth.dims == (std::array<int, 3>{w, h, 1}), ErrCode::kShapeMismatch,
            dir << "/depth.ammv dims do not match the camera");
  sample.depth.width = w;
  sample.depth.height = h;
  sample.depth.values.assign(static_cast<std::size_t>(w) * h, 0.0f);
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) {
      sample.depth.at(u, v) = depth.values[static_cast<std::size_t>(u) * h + v];
    }
  }

  F32Grid rgb = read_f32_grid(dir + "/rgb.ammv");
  AMM_CHECK(rgb.dims == (std::array<int, 3>{w, h, 3}), ErrCode::kShapeMismatch,
            dir << "/rgb.ammv dims do not match the camera");
  sample.rgb.width = w;
  sample.rgb.height = h;
  sample.rgb.values.assign(static_cast<std::size_t>(w) * h * 3, 0.0f);
  for (int u = 0; u < w; ++u) {
    for (int v = 0; v < h; ++v) {
      for (int c = 0; c < 3; ++c) {
        sample.rgb.at(c, u, v) = rgb.values[(static_cast<std::size_t>(u) * h + v) * 3 + c];
      }
    }
  }

  // Derived data is a function of the stored grids and camera.
  sample.map = build_projection_map(sample.depth, config.cam, config.grid);
  sample.mask = compute_eval_mask(sample.depth, config.cam, config.grid);
  sample.semantic2d.width = w;
  sample.semantic2d.height = h;
  sample.semantic2d.values.assign(static_cast<std::size_t>(w) * h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      RayHit hit;
      if (cast_ray(sample.labels, config.cam, u, v, &hit)) {
        sample.semantic2d.values[static_cast<std::size_t>(v) * w + u] = hit.label;
      }
    }
  }
  return loaded;
}

}  // namespace ammnet
