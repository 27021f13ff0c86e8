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

#include "ammnet/nn.hpp"
#include "ammnet/tensor.hpp"
#include "ammnet/voxel_data.hpp"

namespace ammnet {

// How the projected RGB volume and the TSDF volume are combined, both at the
// fusion point and (optionally) inside the decoder.
enum class FusionMode { kAddition, kModulation };

struct GeneratorConfig {
  int channels = 16;  // feature width D, shared by both branches and the decoder
  std::array<int, 3> dims{20, 12, 20};
  int classes = 11;  // semantic classes; scores carry one extra empty channel
  int image_w = 64, image_h = 64;
  FusionMode fusion = FusionMode::kModulation;
  // Modulation sites: after the fusion point, after the mid-resolution
  // decoder block, and after the last decoder layer. At least one must be
  // enabled in modulation mode; all must be off in addition mode.
  bool site_m1 = true, site_m2 = true, site_m3 = true;
  std::uint64_t seed = 0;

  int score_channels() const { return classes + 1; }
  bool wants_condition_down() const { return site_m2 || site_m3; }
  void validate() const;
};

// Views over the sample structs as network input tensors.
Tensor rgb_to_tensor(const RgbImage& rgb);       // (3, H, W)
Tensor tsdf_to_tensor(const TsdfGrid& tsdf);     // (1, Gx, Gy, Gz)

// Scale-and-shift conditioning: the condition volume is turned into a scale
// map and a bias map by two pointwise convolutions, and the primary volume
// becomes out = vr * (1 + sigmoid(scale)) + bias.
class Modulation {
 public:
  Modulation() = default;
  Modulation(std::string name, int channels);

  void init(std::uint64_t seed);
  void collect(ParamList& out);
  void zero_params();

  struct Acts {
    Tensor vr, cond;  // inputs
    Tensor ms, mb;    // raw scale and bias maps
    Tensor gate;      // 1 + sigmoid(ms)
    Tensor out;
  };

  Acts forward(const Tensor& vr, const Tensor& cond) const;
  // Accumulates parameter gradients and the condition gradient (g_cond must
  // already be condition-shaped); returns the gradient w.r.t. vr.
  Tensor backward(const Acts& acts, const Tensor& gy, Tensor& g_cond);

  Conv3d scale_map, bias_map;

 private:
  std::string name_;
};

// Closed form for the gradient the modulation passes to its primary input:
// upstream * (1 + sigmoid(scale map)). Kept as a free function so tests can
// pit the layer's backward pass against it.
Tensor modulation_input_grad(const Tensor& gy, const Tensor& ms);

// Plain elementwise sum of the two branches.
Tensor fuse_add(const Tensor& a, const Tensor& b);

// Four stride-2 stages with one refinement convolution each, a pyramid merge
// at quarter resolution, and a pointwise head producing both the projection
// features and per-pixel class logits.
class RgbEncoder {
 public:
  RgbEncoder() = default;
  RgbEncoder(const std::string& prefix, int channels, int classes);

  void init(std::uint64_t seed);
  void collect(ParamList& out);

  struct Acts {
    Tensor input;
    // Post-activation outputs of every convolution, stage by stage.
    Tensor s1a, s1, s2a, s2, s3a, s3, s4a, s4;
    Tensor cat;             // pyramid concatenation at quarter resolution
    Tensor h1, h2, h3, h4;  // pointwise head; h4 is the projection feature map
    Tensor logits2d;        // (classes + 1, H / 4, W / 4)

    const Tensor& feat() const { return h4; }
  };

  Acts forward(const Tensor& rgb) const;
  // Takes gradients for both head outputs and returns the input gradient.
  Tensor backward(const Acts& acts, const Tensor& g_feat, const Tensor& g_logits2d);

 private:
  std::string prefix_;
  int channels_ = 0;
  Conv2d c1a, c1b, c2a, c2b, c3a, c3b, c4a, c4b;
  Conv2d f1, f2, f3, f4, seg;
};

// Three 3D convolutions (two of them strided), two dilated residual blocks
// at quarter resolution, and two transposed convolutions back to full
// resolution. The half-resolution upsample output doubles as the skip
// feature handed to the decoder.
class TsdfEncoder {
 public:
  TsdfEncoder() = default;
  TsdfEncoder(const std::string& prefix, int channels);

  void init(std::uint64_t seed);
  void collect(ParamList& out);

  struct Acts {
    Tensor input;
    Tensor c1y, c2y, c3y;  // post-activation convolution outputs
    Ddr3d::Acts d1, d2;
    Tensor u1y;  // half resolution, the skip source
    Tensor u2y;  // full resolution, the conditioning volume
  };

  Acts forward(const Tensor& tsdf) const;
  // g_vt is the gradient on the full-resolution output, g_skip the gradient
  // on the skip tensor; returns the gradient w.r.t. the input grid.
  Tensor backward(const Acts& acts, const Tensor& g_vt, const Tensor& g_skip);

 private:
  std::string prefix_;
  Conv3d c1, c2, c3;
  Ddr3d d1, d2;
  ConvTranspose3d u1, u2;
};

// Activations of the fusion-and-decode stage, from the two branch volumes to
// the class logits.
struct GenVolumeActs {
  Tensor vr, vt, skip;
  Modulation::Acts m1;  // populated only when the fusion site is modulated
  Tensor fused;
  Ddr3d::Acts top;
  Tensor down_y;   // half resolution, post activation
  Tensor merged;   // down_y + skip
  Ddr3d::Acts mid;
  Modulation::Acts m2;
  Tensor mid_out;  // feature entering the decoder upsample
  Tensor up_y;     // full resolution, post activation
  Modulation::Acts m3;
  Tensor last;     // feature entering the score layer
  Tensor cond_half;  // downscaled condition volume, when any decoder site runs
  Tensor cond_full;  // upscaled condition volume, when the last site runs
  Tensor logits;   // (classes + 1, dims)
};

struct GenVolumeGrads {
  Tensor vr, vt, skip;
};

struct GenActs {
  RgbEncoder::Acts rgb;
  ProjectionMap map;  // kept so the backward pass can route voxel gradients
  ProjectedFeatures proj;
  TsdfEncoder::Acts tsdf;
  GenVolumeActs vol;
};

// The full voxel predictor: RGB encoder, 2D-to-3D projection, TSDF encoder,
// and a residual decoder with one skip connection, joined by addition or by
// conditioned modulation at up to three sites.
class GeneratorNet {
 public:
  explicit GeneratorNet(const GeneratorConfig& cfg);

  const GeneratorConfig& config() const { return cfg_; }
  const ParamList& params() { return params_; }
  void init_params();

  GenActs forward(const RgbImage& rgb, const TsdfGrid& tsdf, const ProjectionMap& map) const;
  // Accumulates all parameter gradients; returns the gradient w.r.t. the
  // RGB input tensor. g_logits2d may be empty when the 2D head is unused.
  Tensor backward(const GenActs& acts, const Tensor& g_logits, const Tensor& g_logits2d);

  // Fusion-and-decode stage alone, treating the branch volumes as inputs.
  GenVolumeActs forward_volumes(const Tensor& vr, const Tensor& vt, const Tensor& skip) const;
  GenVolumeGrads backward_volumes(const GenVolumeActs& acts, const Tensor& g_logits);

  // Decoder on an externally fused volume, bypassing the fusion site. Lets
  // tests compare configurations that differ only at the fusion point.
  Tensor decode_fused(const Tensor& fused, const Tensor& vt, const Tensor& skip) const;

  // Submodules are exposed for tests and surgical checkpoint work; training
  // code goes through the composite entry points above.
  RgbEncoder rgb_enc;
  TsdfEncoder tsdf_enc;
  Modulation m1, m2, m3;
  Conv3d cond_down;
  ConvTranspose3d cond_up;
  Ddr3d dec_top, dec_mid;
  Conv3d dec_down;
  ConvTranspose3d dec_up;
  Conv3d score;

 private:
  // Everything downstream of acts.fused; shared by forward_volumes and
  // decode_fused.
  void run_decoder(GenVolumeActs& acts) const;

  GeneratorConfig cfg_;
  ParamList params_;
};

}  // namespace ammnet
