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

#include "ammnet/generator.hpp"

#include <utility>

#include "ammnet/error.hpp"
#include "ammnet/rng.hpp"

namespace ammnet {

void GeneratorConfig::validate() const {
  AMM_CHECK(channels >= 1, ErrCode::kBadConfig, "channel count must be positive");
  AMM_CHECK(classes >= 1 && classes <= 254, ErrCode::kBadConfig,
            "class count " << classes << " out of range [1, 254]");
  for (int d : dims) {
    AMM_CHECK(d >= 4 && d % 4 == 0, ErrCode::kBadConfig,
              "grid dims must be positive multiples of 4 (two halvings), got "
                  << dims[0] << "x" << dims[1] << "x" << dims[2]);
  }
  AMM_CHECK(image_w >= 16 && image_w % 16 == 0 && image_h >= 16 && image_h % 16 == 0,
            ErrCode::kBadConfig,
            "image size must be a positive multiple of 16, got " << image_w << "x" << image_h);
  const bool any_site = site_m1 || site_m2 || site_m3;
  if (fusion == FusionMode::kModulation) {
    AMM_CHECK(any_site, ErrCode::kBadConfig,
              "modulation mode requires at least one enabled site");
  } else {
    AMM_CHECK(!any_site, ErrCode::kBadConfig,
              "addition mode admits no modulation sites");
  }
}

Tensor rgb_to_tensor(const RgbImage& rgb) {
  Tensor t({3, rgb.height, rgb.width});
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < rgb.height; ++v) {
      for (int u = 0; u < rgb.width; ++u) {
        t.at(c, v, u) = rgb.at(c, u, v);
      }
    }
  }
  return t;
}

Tensor tsdf_to_tensor(const TsdfGrid& tsdf) {
  tsdf.validate();
  const auto& d = tsdf.spec.dims;
  Tensor t({1, d[0], d[1], d[2]});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = tsdf.values[static_cast<std::size_t>(i)];
  return t;
}

Modulation::Modulation(std::string name, int channels) : name_(std::move(name)) {
  scale_map = Conv3d::pointwise(name_ + "/scale", channels, channels);
  bias_map = Conv3d::pointwise(name_ + "/bias", channels, channels);
}

void Modulation::init(std::uint64_t seed) {
  auto rs = make_rng(seed, name_ + "/scale", 0);
  scale_map.init(rs);
  auto rb = make_rng(seed, name_ + "/bias", 0);
  bias_map.init(rb);
}

void Modulation::collect(ParamList& out) {
  scale_map.collect(out);
  bias_map.collect(out);
}

void Modulation::zero_params() {
  scale_map.w.zero();
  scale_map.b.zero();
  bias_map.w.zero();
  bias_map.b.zero();
}

Modulation::Acts Modulation::forward(const Tensor& vr, const Tensor& cond) const {
  AMM_CHECK(vr.same_shape(cond), ErrCode::kShapeMismatch,
            "modulation inputs disagree: " << vr.shape_str() << " vs " << cond.shape_str());
  Acts a;
  a.vr = vr;
  a.cond = cond;
  a.ms = scale_map.forward(cond);
  a.mb = bias_map.forward(cond);
  a.gate = Tensor(vr.shape());
  a.out = Tensor(vr.shape());
  for (std::int64_t i = 0; i < vr.size(); ++i) {
    const double g = 1.0 + sigmoid(a.ms[i]);
    a.gate[i] = g;
    a.out[i] = vr[i] * g + a.mb[i];
  }
  return a;
}

Tensor Modulation::backward(const Acts& acts, const Tensor& gy, Tensor& g_cond) {
  AMM_CHECK(gy.same_shape(acts.out), ErrCode::kShapeMismatch,
            "modulation upstream gradient has shape " << gy.shape_str());
  Tensor g_vr(acts.vr.shape());
  Tensor g_ms(acts.ms.shape());
  for (std::int64_t i = 0; i < gy.size(); ++i) {
    const double sig = acts.gate[i] - 1.0;  // sigmoid of the raw scale
    g_vr[i] = gy[i] * acts.gate[i];
    g_ms[i] = gy[i] * acts.vr[i] * sig * (1.0 - sig);
  }
  g_cond.add_scaled(scale_map.backward(acts.cond, g_ms), 1.0);
  g_cond.add_scaled(bias_map.backward(acts.cond, gy), 1.0);
  return g_vr;
}

Tensor modulation_input_grad(const Tensor& gy, const Tensor& ms) {
  AMM_CHECK(gy.same_shape(ms), ErrCode::kShapeMismatch,
            "gradient and scale map disagree: " << gy.shape_str() << " vs " << ms.shape_str());
  Tensor out(gy.shape());
  for (std::int64_t i = 0; i < gy.size(); ++i) out[i] = gy[i] * (1.0 + sigmoid(ms[i]));
  return out;
}

Tensor fuse_add(const Tensor& a, const Tensor& b) {
  AMM_CHECK(a.same_shape(b), ErrCode::kShapeMismatch,
            "fusion inputs disagree: " << a.shape_str() << " vs " << b.shape_str());
  Tensor out = a;
  out.add_scaled(b, 1.0);
  return out;
}

RgbEncoder::RgbEncoder(const std::string& prefix, int channels, int classes)
    : prefix_(prefix), channels_(channels) {
  const int d = channels;
  c1a = Conv2d(prefix + "/c1a", 3, d, 3, 2, 1);
  c1b = Conv2d(prefix + "/c1b", d, d, 3, 1, 1);
  c2a = Conv2d(prefix + "/c2a", d, d, 3, 2, 1);
  c2b = Conv2d(prefix + "/c2b", d, d, 3, 1, 1);
  c3a = Conv2d(prefix + "/c3a", d, d, 3, 2, 1);
  c3b = Conv2d(prefix + "/c3b", d, d, 3, 1, 1);
  c4a = Conv2d(prefix + "/c4a", d, d, 3, 2, 1);
  c4b = Conv2d(prefix + "/c4b", d, d, 3, 1, 1);
  f1 = Conv2d(prefix + "/f1", 4 * d, d, 1, 1, 0);
  f2 = Conv2d(prefix + "/f2", d, d, 1, 1, 0);
  f3 = Conv2d(prefix + "/f3", d, d, 1, 1, 0);
  f4 = Conv2d(prefix + "/f4", d, d, 1, 1, 0);
  seg = Conv2d(prefix + "/seg", d, classes + 1, 1, 1, 0);
}

void RgbEncoder::init(std::uint64_t seed) {
  // Every layer draws from its own named stream, so weights do not depend on
  // which sibling modules exist in the surrounding network.
  auto one = [&](Conv2d& layer, const char* tag) {
    auto rng = make_rng(seed, prefix_ + "/" + tag, 0);
    layer.init(rng);
  };
  one(c1a, "c1a");
  one(c1b, "c1b");
  one(c2a, "c2a");
  one(c2b, "c2b");
  one(c3a, "c3a");
  one(c3b, "c3b");
  one(c4a, "c4a");
  one(c4b, "c4b");
  one(f1, "f1");
  one(f2, "f2");
  one(f3, "f3");
  one(f4, "f4");
  one(seg, "seg");
}

void RgbEncoder::collect(ParamList& out) {
  c1a.collect(out);
  c1b.collect(out);
  c2a.collect(out);
  c2b.collect(out);
  c3a.collect(out);
  c3b.collect(out);
  c4a.collect(out);
  c4b.collect(out);
  f1.collect(out);
  f2.collect(out);
  f3.collect(out);
  f4.collect(out);
  seg.collect(out);
}

RgbEncoder::Acts RgbEncoder::forward(const Tensor& rgb) const {
  AMM_CHECK(rgb.rank() == 3 && rgb.dim(0) == 3, ErrCode::kShapeMismatch,
            "expected a (3, H, W) image, got " << rgb.shape_str());
  Acts a;
  a.input = rgb;
  a.s1a = relu(c1a.forward(rgb));
  a.s1 = relu(c1b.forward(a.s1a));
  a.s2a = relu(c2a.forward(a.s1));
  a.s2 = relu(c2b.forward(a.s2a));
  a.s3a = relu(c3a.forward(a.s2));
  a.s3 = relu(c3b.forward(a.s3a));
  a.s4a = relu(c4a.forward(a.s3));
  a.s4 = relu(c4b.forward(a.s4a));

  const int h4 = rgb.dim(1) / 4, w4 = rgb.dim(2) / 4;
  Tensor p1 = nearest_resize2d(a.s1, h4, w4);
  Tensor p3 = nearest_resize2d(a.s3, h4, w4);
  Tensor p4 = nearest_resize2d(a.s4, h4, w4);
  a.cat = concat_channels({&p1, &a.s2, &p3, &p4});

  a.h1 = relu(f1.forward(a.cat));
  a.h2 = relu(f2.forward(a.h1));
  a.h3 = relu(f3.forward(a.h2));
  a.h4 = relu(f4.forward(a.h3));
  a.logits2d = seg.forward(a.h4);
  return a;
}

Tensor RgbEncoder::backward(const Acts& acts, const Tensor& g_feat, const Tensor& g_logits2d) {
  AMM_CHECK(g_feat.size() > 0 || g_logits2d.size() > 0, ErrCode::kInvalidArgument,
            "encoder backward needs at least one upstream gradient");
  Tensor g_h4;
  if (g_logits2d.size() > 0) {
    g_h4 = seg.backward(acts.h4, g_logits2d);
    if (g_feat.size() > 0) g_h4.add_scaled(g_feat, 1.0);
  } else {
    g_h4 = g_feat;
  }

  Tensor g = relu_backward(acts.h4, g_h4);
  g = f4.backward(acts.h3, g);
  g = relu_backward(acts.h3, g);
  g = f3.backward(acts.h2, g);
  g = relu_backward(acts.h2, g);
  g = f2.backward(acts.h1, g);
  g = relu_backward(acts.h1, g);
  Tensor g_cat = f1.backward(acts.cat, g);

  const int d = channels_;
  std::vector<Tensor> gp = split_channels(g_cat, {d, d, d, d});
  Tensor g_s1 = nearest_resize2d_backward(gp[0], acts.s1.dim(1), acts.s1.dim(2));
  Tensor g_s2 = std::move(gp[1]);
  Tensor g_s3 = nearest_resize2d_backward(gp[2], acts.s3.dim(1), acts.s3.dim(2));
  Tensor g_s4 = nearest_resize2d_backward(gp[3], acts.s4.dim(1), acts.s4.dim(2));

  g = relu_backward(acts.s4, g_s4);
  g = c4b.backward(acts.s4a, g);
  g = relu_backward(acts.s4a, g);
  g_s3.add_scaled(c4a.backward(acts.s3, g), 1.0);

  g = relu_backward(acts.s3, g_s3);
  g = c3b.backward(acts.s3a, g);
  g = relu_backward(acts.s3a, g);
  g_s2.add_scaled(c3a.backward(acts.s2, g), 1.0);

  g = relu_backward(acts.s2, g_s2);
  g = c2b.backward(acts.s2a, g);
  g = relu_backward(acts.s2a, g);
  g_s1.add_scaled(c2a.backward(acts.s1, g), 1.0);

  g = relu_backward(acts.s1, g_s1);
  g = c1b.backward(acts.s1a, g);
  g = relu_backward(acts.s1a, g);
  return c1a.backward(acts.input, g);
}

TsdfEncoder::TsdfEncoder(const std::string& prefix, int channels) : prefix_(prefix) {
  const int d = channels;
  c1 = Conv3d::cube(prefix + "/c1", 1, d, 3, 1, 1);
  c2 = Conv3d::cube(prefix + "/c2", d, d, 3, 2, 1);
  c3 = Conv3d::cube(prefix + "/c3", d, d, 3, 2, 1);
  d1 = Ddr3d(prefix + "/d1", d, d, 1, 1);
  d2 = Ddr3d(prefix + "/d2", d, d, 2, 1);
  u1 = ConvTranspose3d(prefix + "/u1", d, d, 4, 2, 1);
  u2 = ConvTranspose3d(prefix + "/u2", d, d, 4, 2, 1);
}

void TsdfEncoder::init(std::uint64_t seed) {
  auto stream = [&](const char* tag) { return make_rng(seed, prefix_ + "/" + tag, 0); };
  auto r1 = stream("c1");
  c1.init(r1);
  auto r2 = stream("c2");
  c2.init(r2);
  auto r3 = stream("c3");
  c3.init(r3);
  auto r4 = stream("d1");
  d1.init(r4);
  auto r5 = stream("d2");
  d2.init(r5);
  auto r6 = stream("u1");
  u1.init(r6);
  auto r7 = stream("u2");
  u2.init(r7);
}

void TsdfEncoder::collect(ParamList& out) {
  c1.collect(out);
  c2.collect(out);
  c3.collect(out);
  d1.collect(out);
  d2.collect(out);
  u1.collect(out);
  u2.collect(out);
}

TsdfEncoder::Acts TsdfEncoder::forward(const Tensor& tsdf) const {
  AMM_CHECK(tsdf.rank() == 4 && tsdf.dim(0) == 1, ErrCode::kShapeMismatch,
            "expected a (1, Gx, Gy, Gz) grid, got " << tsdf.shape_str());
  Acts a;
  a.input = tsdf;
  a.c1y = relu(c1.forward(tsdf));
  a.c2y = relu(c2.forward(a.c1y));
  a.c3y = relu(c3.forward(a.c2y));
  a.d1 = d1.forward(a.c3y);
  a.d2 = d2.forward(a.d1.y);
  a.u1y = relu(u1.forward(a.d2.y));
  a.u2y = relu(u2.forward(a.u1y));
  return a;
}

Tensor TsdfEncoder::backward(const Acts& acts, const Tensor& g_vt, const Tensor& g_skip) {
  Tensor g = relu_backward(acts.u2y, g_vt);
  g = u2.backward(acts.u1y, g);
  if (g_skip.size() > 0) g.add_scaled(g_skip, 1.0);
  g = relu_backward(acts.u1y, g);
  g = u1.backward(acts.d2.y, g);
  g = d2.backward(acts.d2, g);
  g = d1.backward(acts.d1, g);
  g = relu_backward(acts.c3y, g);
  g = c3.backward(acts.c2y, g);
  g = relu_backward(acts.c2y, g);
  g = c2.backward(acts.c1y, g);
  g = relu_backward(acts.c1y, g);
  return c1.backward(acts.input, g);
}

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.channels;
  rgb_enc = RgbEncoder("gen/rgb", d, cfg_.classes);
  tsdf_enc = TsdfEncoder("gen/tsdf", d);
  if (cfg_.site_m1) m1 = Modulation("gen/m1", d);
  if (cfg_.wants_condition_down()) cond_down = Conv3d::cube("gen/cond_down", d, d, 3, 2, 1);
  if (cfg_.site_m2) m2 = Modulation("gen/m2", d);
  if (cfg_.site_m3) {
    cond_up = ConvTranspose3d("gen/cond_up", d, d, 4, 2, 1);
    m3 = Modulation("gen/m3", d);
  }
  dec_top = Ddr3d("gen/dec/top", d, d, 1, 1);
  dec_down = Conv3d::cube("gen/dec/down", d, d, 3, 2, 1);
  dec_mid = Ddr3d("gen/dec/mid", d, d, 2, 1);
  dec_up = ConvTranspose3d("gen/dec/up", d, d, 4, 2, 1);
  score = Conv3d::pointwise("gen/score", d, cfg_.score_channels());

  rgb_enc.collect(params_);
  tsdf_enc.collect(params_);
  if (cfg_.site_m1) m1.collect(params_);
  if (cfg_.wants_condition_down()) cond_down.collect(params_);
  if (cfg_.site_m2) m2.collect(params_);
  if (cfg_.site_m3) {
    cond_up.collect(params_);
    m3.collect(params_);
  }
  dec_top.collect(params_);
  dec_down.collect(params_);
  dec_mid.collect(params_);
  dec_up.collect(params_);
  score.collect(params_);
}

void GeneratorNet::init_params() {
  const std::uint64_t seed = cfg_.seed;
  rgb_enc.init(seed);
  tsdf_enc.init(seed);
  if (cfg_.site_m1) m1.init(seed);
  if (cfg_.wants_condition_down()) {
    auto r = make_rng(seed, "gen/cond_down", 0);
    cond_down.init(r);
  }
  if (cfg_.site_m2) m2.init(seed);
  if (cfg_.site_m3) {
    auto r = make_rng(seed, "gen/cond_up", 0);
    cond_up.init(r);
    m3.init(seed);
  }
  auto r1 = make_rng(seed, "gen/dec/top", 0);
  dec_top.init(r1);
  auto r2 = make_rng(seed, "gen/dec/down", 0);
  dec_down.init(r2);
  auto r3 = make_rng(seed, "gen/dec/mid", 0);
  dec_mid.init(r3);
  auto r4 = make_rng(seed, "gen/dec/up", 0);
  dec_up.init(r4);
  auto r5 = make_rng(seed, "gen/score", 0);
  score.init(r5);
}

void GeneratorNet::run_decoder(GenVolumeActs& acts) const {
  if (cfg_.wants_condition_down()) {
    acts.cond_half = relu(cond_down.forward(acts.vt));
    if (cfg_.site_m3) acts.cond_full = relu(cond_up.forward(acts.cond_half));
  }

  acts.top = dec_top.forward(acts.fused);
  acts.down_y = relu(dec_down.forward(acts.top.y));
  acts.merged = fuse_add(acts.down_y, acts.skip);
  acts.mid = dec_mid.forward(acts.merged);
  if (cfg_.site_m2) {
    acts.m2 = m2.forward(acts.mid.y, acts.cond_half);
    acts.mid_out = acts.m2.out;
  } else {
    acts.mid_out = acts.mid.y;
  }
  acts.up_y = relu(dec_up.forward(acts.mid_out));
  if (cfg_.site_m3) {
    acts.m3 = m3.forward(acts.up_y, acts.cond_full);
    acts.last = acts.m3.out;
  } else {
    acts.last = acts.up_y;
  }
  acts.logits = score.forward(acts.last);
}

GenVolumeActs GeneratorNet::forward_volumes(const Tensor& vr, const Tensor& vt,
                                            const Tensor& skip) const {
  AMM_CHECK(vr.same_shape(vt), ErrCode::kShapeMismatch,
            "branch volumes disagree: " << vr.shape_str() << " vs " << vt.shape_str());
  GenVolumeActs acts;
  acts.vr = vr;
  acts.vt = vt;
  acts.skip = skip;
  if (cfg_.site_m1) {
    acts.m1 = m1.forward(vr, vt);
    acts.fused = acts.m1.out;
  } else {
    acts.fused = fuse_add(vr, vt);
  }
  run_decoder(acts);
  return acts;
}

Tensor GeneratorNet::decode_fused(const Tensor& fused, const Tensor& vt,
                                  const Tensor& skip) const {
  GenVolumeActs acts;
  acts.vt = vt;
  acts.skip = skip;
  acts.fused = fused;
  run_decoder(acts);
  return acts.logits;
}

GenVolumeGrads GeneratorNet::backward_volumes(const GenVolumeActs& acts, const Tensor& g_logits) {
  GenVolumeGrads out;
  out.vt = Tensor(acts.vt.shape());
  Tensor g_cond_half, g_cond_full;
  if (cfg_.wants_condition_down()) g_cond_half = Tensor(acts.cond_half.shape());
  if (cfg_.site_m3) g_cond_full = Tensor(acts.cond_full.shape());

  Tensor g_last = score.backward(acts.last, g_logits);
  Tensor g_up = cfg_.site_m3 ? m3.backward(acts.m3, g_last, g_cond_full) : std::move(g_last);
  g_up = relu_backward(acts.up_y, g_up);
  Tensor g_mid_out = dec_up.backward(acts.mid_out, g_up);
  Tensor g_mid = cfg_.site_m2 ? m2.backward(acts.m2, g_mid_out, g_cond_half)
                              : std::move(g_mid_out);
  Tensor g_merged = dec_mid.backward(acts.mid, g_mid);
  out.skip = g_merged;
  Tensor g_down = relu_backward(acts.down_y, g_merged);
  Tensor g_top_y = dec_down.backward(acts.top.y, g_down);
  Tensor g_fused = dec_top.backward(acts.top, g_top_y);

  if (cfg_.site_m1) {
    out.vr = m1.backward(acts.m1, g_fused, out.vt);
  } else {
    out.vr = g_fused;
    out.vt.add_scaled(g_fused, 1.0);
  }

  // Condition path: gradients collected at the decoder sites flow back
  // through the scaling convolutions into the conditioning volume.
  if (cfg_.site_m3) {
    Tensor t = relu_backward(acts.cond_full, g_cond_full);
    g_cond_half.add_scaled(cond_up.backward(acts.cond_half, t), 1.0);
  }
  if (cfg_.wants_condition_down()) {
    Tensor t = relu_backward(acts.cond_half, g_cond_half);
    out.vt.add_scaled(cond_down.backward(acts.vt, t), 1.0);
  }
  return out;
}

GenActs GeneratorNet::forward(const RgbImage& rgb, const TsdfGrid& tsdf,
                              const ProjectionMap& map) const {
  AMM_CHECK(rgb.width == cfg_.image_w && rgb.height == cfg_.image_h, ErrCode::kShapeMismatch,
            "image is " << rgb.width << "x" << rgb.height << ", config wants " << cfg_.image_w
                        << "x" << cfg_.image_h);
  AMM_CHECK(tsdf.spec.dims == cfg_.dims, ErrCode::kShapeMismatch,
            "grid dims disagree with the model config");
  AMM_CHECK(map.width == rgb.width && map.height == rgb.height, ErrCode::kShapeMismatch,
            "projection map does not match the image size");

  GenActs acts;
  acts.rgb = rgb_enc.forward(rgb_to_tensor(rgb));
  acts.map = map;
  acts.proj = project_features(acts.rgb.feat(), map);
  acts.tsdf = tsdf_enc.forward(tsdf_to_tensor(tsdf));
  acts.vol = forward_volumes(acts.proj.volume, acts.tsdf.u2y, acts.tsdf.u1y);
  return acts;
}

Tensor GeneratorNet::backward(const GenActs& acts, const Tensor& g_logits,
                              const Tensor& g_logits2d) {
  GenVolumeGrads vg = backward_volumes(acts.vol, g_logits);
  Tensor g_feat = project_features_backward(vg.vr, acts.map, acts.proj.counts,
                                            cfg_.image_h / 4, cfg_.image_w / 4);
  tsdf_enc.backward(acts.tsdf, vg.vt, vg.skip);
  return rgb_enc.backward(acts.rgb, g_feat, g_logits2d);
}

}  // namespace ammnet
