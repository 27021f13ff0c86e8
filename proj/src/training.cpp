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

#include "ammnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "ammnet/checkpoint.hpp"
#include "ammnet/error.hpp"
#include "ammnet/losses.hpp"
#include "ammnet/perturb.hpp"
#include "ammnet/rng.hpp"
#include "ammnet/util.hpp"

namespace ammnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  AMM_CHECK(epochs >= 1, ErrCode::kBadConfig, "epochs must be at least 1");
  AMM_CHECK(batch_size >= 1, ErrCode::kBadConfig, "batch_size must be at least 1");
  AMM_CHECK(lr_init > 0.0 && lr_min > 0.0, ErrCode::kBadConfig, "learning rates must be positive");
  AMM_CHECK(lr_min <= lr_init, ErrCode::kBadConfig, "lr_min must not exceed lr_init");
  AMM_CHECK(weight_decay >= 0.0, ErrCode::kBadConfig, "weight_decay must be non-negative");
  AMM_CHECK(lambda_2d >= 0.0, ErrCode::kBadConfig, "lambda_2d must be non-negative");
  AMM_CHECK(beta_adv >= 0.0, ErrCode::kBadConfig, "beta_adv must be non-negative");
  AMM_CHECK(smooth_eps >= 0.0 && smooth_eps < 1.0, ErrCode::kBadConfig,
            "smooth_eps must lie in [0, 1)");
  AMM_CHECK(pg_min > 0.0 && pg_min <= pg_max && pg_max <= 1.0, ErrCode::kBadConfig,
            "erase probability range must satisfy 0 < min <= max <= 1");
  AMM_CHECK(ps_min > 0.0 && ps_min <= ps_max && ps_max <= 1.0, ErrCode::kBadConfig,
            "shuffle probability range must satisfy 0 < min <= max <= 1");
  AMM_CHECK(train_scenes >= 1, ErrCode::kBadConfig, "need at least one training scene");
  AMM_CHECK(val_scenes >= 0 && test_scenes >= 0, ErrCode::kBadConfig,
            "split sizes must be non-negative");
  AMM_CHECK(ckpt_every >= 1, ErrCode::kBadConfig, "ckpt_every must be at least 1");
  // The network and scene configs carry their own constraints (grid
  // divisibility, class budget, fusion/site coherence).
  generator_config().validate();
  scene_config().validate();
  if (adversarial) disc_config().validate();
}

SceneGenConfig TrainConfig::scene_config() const {
  SceneGenConfig sc = default_scene_config();
  sc.grid.dims = dims;
  // Keep the camera at the origin looking down +z and center the grid in
  // front of it, whatever the footprint.
  sc.grid.origin = {-dims[0] * sc.grid.voxel_size / 2.0, -dims[1] * sc.grid.voxel_size / 2.0,
                    1.0};
  sc.classes = classes;
  return sc;
}

GeneratorConfig TrainConfig::generator_config() const {
  SceneGenConfig sc = scene_config();
  GeneratorConfig gc;
  gc.channels = channels;
  gc.dims = dims;
  gc.classes = classes;
  gc.image_w = sc.cam.width;
  gc.image_h = sc.cam.height;
  gc.fusion = fusion;
  gc.site_m1 = site_m1;
  gc.site_m2 = site_m2;
  gc.site_m3 = site_m3;
  gc.seed = seed;
  return gc;
}

DiscConfig TrainConfig::disc_config() const {
  DiscConfig dc;
  dc.channels = channels;
  dc.classes = classes;
  dc.dims = dims;
  dc.seed = seed;
  return dc;
}

namespace {

FusionMode fusion_from_string(const std::string& s) {
  if (s == "modulation") return FusionMode::kModulation;
  if (s == "addition") return FusionMode::kAddition;
  AMM_CHECK(false, ErrCode::kBadConfig, "unknown fusion mode '" << s << "'");
}

const char* fusion_to_string(FusionMode m) {
  return m == FusionMode::kModulation ? "modulation" : "addition";
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  AMM_CHECK(j.is_object(), ErrCode::kBadConfig, "train config must be a JSON object");
  TrainConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "batch_size") cfg.batch_size = value.get<int>();
      else if (key == "lr_init") cfg.lr_init = value.get<double>();
      else if (key == "lr_min") cfg.lr_min = value.get<double>();
      else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
      else if (key == "lambda_2d") cfg.lambda_2d = value.get<double>();
      else if (key == "beta_adv") cfg.beta_adv = value.get<double>();
      else if (key == "smooth_eps") cfg.smooth_eps = value.get<double>();
      else if (key == "fusion") cfg.fusion = fusion_from_string(value.get<std::string>());
      else if (key == "site_m1") cfg.site_m1 = value.get<bool>();
      else if (key == "site_m2") cfg.site_m2 = value.get<bool>();
      else if (key == "site_m3") cfg.site_m3 = value.get<bool>();
      else if (key == "adversarial") cfg.adversarial = value.get<bool>();
      else if (key == "adv_literal_g") cfg.adv_literal_g = value.get<bool>();
      else if (key == "perturb_geo") cfg.perturb_geo = value.get<bool>();
      else if (key == "perturb_sem") cfg.perturb_sem = value.get<bool>();
      else if (key == "pg_min") cfg.pg_min = value.get<double>();
      else if (key == "pg_max") cfg.pg_max = value.get<double>();
      else if (key == "ps_min") cfg.ps_min = value.get<double>();
      else if (key == "ps_max") cfg.ps_max = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "train_scenes") cfg.train_scenes = value.get<int>();
      else if (key == "val_scenes") cfg.val_scenes = value.get<int>();
      else if (key == "test_scenes") cfg.test_scenes = value.get<int>();
      else if (key == "dims") {
        AMM_CHECK(value.is_array() && value.size() == 3, ErrCode::kBadConfig,
                  "dims must be an array of three integers");
        for (int a = 0; a < 3; ++a) cfg.dims[a] = value.at(a).get<int>();
      } else if (key == "channels") cfg.channels = value.get<int>();
      else if (key == "classes") cfg.classes = value.get<int>();
      else if (key == "ckpt_every") cfg.ckpt_every = value.get<int>();
      else AMM_CHECK(false, ErrCode::kBadConfig, "unknown train config key '" << key << "'");
    }
  } catch (const nlohmann::json::exception& e) {
    AMM_CHECK(false, ErrCode::kBadConfig, "malformed train config: " << e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"lr_init", cfg.lr_init},
                        {"lr_min", cfg.lr_min},
                        {"weight_decay", cfg.weight_decay},
                        {"lambda_2d", cfg.lambda_2d},
                        {"beta_adv", cfg.beta_adv},
                        {"smooth_eps", cfg.smooth_eps},
                        {"fusion", fusion_to_string(cfg.fusion)},
                        {"site_m1", cfg.site_m1},
                        {"site_m2", cfg.site_m2},
                        {"site_m3", cfg.site_m3},
                        {"adversarial", cfg.adversarial},
                        {"adv_literal_g", cfg.adv_literal_g},
                        {"perturb_geo", cfg.perturb_geo},
                        {"perturb_sem", cfg.perturb_sem},
                        {"pg_min", cfg.pg_min},
                        {"pg_max", cfg.pg_max},
                        {"ps_min", cfg.ps_min},
                        {"ps_max", cfg.ps_max},
                        {"seed", cfg.seed},
                        {"train_scenes", cfg.train_scenes},
                        {"val_scenes", cfg.val_scenes},
                        {"test_scenes", cfg.test_scenes},
                        {"dims", cfg.dims},
                        {"channels", cfg.channels},
                        {"classes", cfg.classes},
                        {"ckpt_every", cfg.ckpt_every}};
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig cfg;  // defaults describe the full model
  if (name == "ammnet") return cfg;
  if (name == "baseline") {
    cfg.fusion = FusionMode::kAddition;
    cfg.site_m1 = cfg.site_m2 = cfg.site_m3 = false;
    cfg.adversarial = false;
    return cfg;
  }
  if (name == "ammnet-noadv") {
    cfg.adversarial = false;
    return cfg;
  }
  if (name == "ammnet-nomod") {
    cfg.fusion = FusionMode::kAddition;
    cfg.site_m1 = cfg.site_m2 = cfg.site_m3 = false;
    return cfg;
  }
  AMM_CHECK(false, ErrCode::kInvalidArgument, "unknown preset '" << name << "'");
}

// ---------------------------------------------------------------------------
// Dataset

Dataset build_dataset(const TrainConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.scene_cfg = cfg.scene_config();
  // Disjoint index ranges keep the splits independent of each other's sizes:
  // growing the training set never changes what validation sees.
  const auto synth = [&](std::vector<SceneSample>& out, int count, std::uint64_t base) {
    out.resize(static_cast<std::size_t>(count));
    parallel_for(0, count, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i)
        out[static_cast<std::size_t>(i)] =
            gen_synthetic_scene(data.scene_cfg, cfg.seed, base + static_cast<std::uint64_t>(i));
    });
  };
  synth(data.train, cfg.train_scenes, 0);
  synth(data.val, cfg.val_scenes, std::uint64_t{1} << 20);
  synth(data.test, cfg.test_scenes, std::uint64_t{2} << 20);
  return data;
}

// ---------------------------------------------------------------------------
// Curves

static const char kCurveHeader[] = "epoch,split,sc_iou,ssc_miou,loss_ssc,loss_g_adv,loss_d";

void write_curves_csv(const fs::path& path, const std::vector<CurvePoint>& curves) {
  std::ofstream out(path);
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "cannot open " << path.string() << " for writing");
  out << kCurveHeader << "\n";
  for (const CurvePoint& p : curves) {
    out << p.epoch << ',' << p.split << ',' << format_double(p.sc_iou) << ','
        << format_double(p.ssc_miou) << ',' << format_double(p.loss_ssc) << ','
        << format_double(p.loss_g_adv) << ',' << format_double(p.loss_d) << "\n";
  }
  out.flush();
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "failed writing " << path.string());
}

std::vector<CurvePoint> read_curves_csv(const fs::path& path) {
  std::ifstream in(path);
  AMM_CHECK(in.good(), ErrCode::kIoFailure, "cannot open " << path.string());
  std::string line;
  AMM_CHECK(std::getline(in, line) && line == kCurveHeader, ErrCode::kBadConfig,
            "unexpected curve header in " << path.string());
  std::vector<CurvePoint> curves;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    AMM_CHECK(fields.size() == 7, ErrCode::kBadConfig,
              "malformed curve row '" << line << "' in " << path.string());
    CurvePoint p;
    try {
      p.epoch = std::stoi(fields[0]);
      p.split = fields[1];
      p.sc_iou = std::stod(fields[2]);
      p.ssc_miou = std::stod(fields[3]);
      p.loss_ssc = std::stod(fields[4]);
      p.loss_g_adv = std::stod(fields[5]);
      p.loss_d = std::stod(fields[6]);
    } catch (const std::exception&) {
      AMM_CHECK(false, ErrCode::kBadConfig, "unparsable curve row '" << line << "'");
    }
    AMM_CHECK(!p.split.empty(), ErrCode::kBadConfig, "curve row lacks a split name");
    curves.push_back(std::move(p));
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Augmentation

Augmentation draw_augmentation(std::mt19937_64& rng, bool allow_swap) {
  std::uniform_int_distribution<int> coin(0, 1);
  Augmentation a;
  a.flip_x = coin(rng) == 1;
  a.flip_z = coin(rng) == 1;
  // Draw the exchange coin unconditionally so the stream layout does not
  // depend on the grid footprint.
  const bool swap = coin(rng) == 1;
  a.swap_xz = allow_swap && swap;
  a.flip_2d = coin(rng) == 1;
  return a;
}

namespace {

// Linear voxel index of the transform target. Flips happen first, then the
// x-z exchange; the exchange requires a square footprint so the index space
// is unchanged.
std::int64_t augment_target(const GridSpec& spec, const Augmentation& a, std::int64_t v) {
  const int dy = spec.dims[1], dz = spec.dims[2];
  int i = static_cast<int>(v / (static_cast<std::int64_t>(dy) * dz));
  const std::int64_t rem = v % (static_cast<std::int64_t>(dy) * dz);
  const int j = static_cast<int>(rem / dz);
  int k = static_cast<int>(rem % dz);
  if (a.flip_x) i = spec.dims[0] - 1 - i;
  if (a.flip_z) k = spec.dims[2] - 1 - k;
  if (a.swap_xz) std::swap(i, k);
  return spec.linear(i, j, k);
}

}  // namespace

SceneSample apply_augmentation(const SceneSample& sample, const Augmentation& aug) {
  const GridSpec& spec = sample.labels.spec;
  AMM_CHECK(!aug.swap_xz || spec.dims[0] == spec.dims[2], ErrCode::kInvalidArgument,
            "the x-z exchange needs a square footprint");
  SceneSample out = sample;

  if (aug.flip_2d) {
    const int w = sample.rgb.width, h = sample.rgb.height;
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const int su = w - 1 - u;
        for (int c = 0; c < 3; ++c) out.rgb.at(c, u, v) = sample.rgb.at(c, su, v);
        out.depth.at(u, v) = sample.depth.at(su, v);
        out.semantic2d.values[static_cast<std::size_t>(v) * w + u] = sample.semantic2d.at(su, v);
        out.map.voxel_of_pixel[static_cast<std::size_t>(v) * w + u] =
            sample.map.voxel_of_pixel[static_cast<std::size_t>(v) * w + su];
      }
    }
  }

  if (aug.flip_x || aug.flip_z || aug.swap_xz) {
    const std::int64_t n = spec.voxel_count();
    for (std::int64_t v = 0; v < n; ++v) {
      const auto t = static_cast<std::size_t>(augment_target(spec, aug, v));
      const auto s = static_cast<std::size_t>(v);
      out.labels.labels[t] = sample.labels.labels[s];
      out.tsdf.values[t] = sample.tsdf.values[s];
      out.mask.states[t] = sample.mask.states[s];
    }
    // The pixel side of the map was handled above; here only the voxel ids
    // move. The result is a self-consistent training view, not a re-render:
    // image content and camera pose stay fixed while every voxel-indexed
    // field agrees on the new layout.
    for (std::int64_t& v : out.map.voxel_of_pixel)
      if (v >= 0) v = augment_target(spec, aug, v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TrainState

TrainState::TrainState(const TrainConfig& cfg)
    : cfg_(cfg),
      opt_g_(0.9, 0.999, 1e-8, cfg.weight_decay),
      opt_d_(0.9, 0.999, 1e-8, cfg.weight_decay) {
  cfg_.validate();
  gen_ = std::make_unique<GeneratorNet>(cfg_.generator_config());
  gen_->init_params();
  opt_g_.attach(gen_->params());
  if (cfg_.adversarial) {
    disc_ = std::make_unique<Discriminator>(cfg_.disc_config());
    disc_->init_params();
    opt_d_.attach(disc_->params());
  }
}

StepStats TrainState::step(const std::vector<const SceneSample*>& batch, double lr,
                           std::mt19937_64& perturb_rng,
                           const std::function<void()>& between_phases) {
  const int B = static_cast<int>(batch.size());
  AMM_CHECK(B >= 1, ErrCode::kInvalidArgument, "empty batch");
  StepStats stats;

  // Phase one: run the generator forward on the whole batch (activations are
  // kept for the later generator update) and, with the adversary enabled,
  // take one scorer step against real grids, the generator's current output
  // treated as a constant, and the two corrupted-real fakes.
  std::vector<GenActs> acts(static_cast<std::size_t>(B));
  std::vector<Tensor> probs(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const SceneSample& s = *batch[static_cast<std::size_t>(b)];
    acts[static_cast<std::size_t>(b)] = gen_->forward(s.rgb, s.tsdf, s.map);
    probs[static_cast<std::size_t>(b)] =
        softmax_channels(acts[static_cast<std::size_t>(b)].vol.logits);
  }

  if (cfg_.adversarial) {
    zero_grads(disc_->params());
    std::vector<double> d_real, d_gen, d_geo, d_sem;
    std::uniform_real_distribution<double> geo_p(cfg_.pg_min, cfg_.pg_max);
    for (int b = 0; b < B; ++b) {
      const SceneSample& s = *batch[static_cast<std::size_t>(b)];
      auto ar = disc_->forward(labels_to_simplex(s.labels, cfg_.classes));
      disc_->backward(ar, adv_d_logit_grad(ar.p, /*is_real=*/true, B));
      d_real.push_back(ar.p);

      auto ag = disc_->forward(probs[static_cast<std::size_t>(b)]);
      disc_->backward(ag, adv_d_logit_grad(ag.p, /*is_real=*/false, B));
      d_gen.push_back(ag.p);

      if (cfg_.perturb_geo) {
        LabelGrid fake = perturb_geometric(s.labels, geo_p(perturb_rng), perturb_rng);
        auto af = disc_->forward(labels_to_simplex(fake, cfg_.classes));
        disc_->backward(af, adv_d_logit_grad(af.p, /*is_real=*/false, B));
        d_geo.push_back(af.p);
      }
      if (cfg_.perturb_sem) {
        LabelGrid fake =
            perturb_semantic(s.labels, cfg_.classes, cfg_.ps_min, cfg_.ps_max, perturb_rng);
        auto af = disc_->forward(labels_to_simplex(fake, cfg_.classes));
        disc_->backward(af, adv_d_logit_grad(af.p, /*is_real=*/false, B));
        d_sem.push_back(af.p);
      }
    }
    stats.loss_d = adv_losses(d_real, d_gen, d_geo, d_sem, cfg_.adv_literal_g).loss_d;
    opt_d_.step(disc_->params(), lr);
    zero_grads(disc_->params());
  }

  if (between_phases) between_phases();

  // Phase two: one generator step on the task loss plus, when enabled, the
  // adversarial term evaluated against the freshly updated scorer. Scoring
  // the generator output backpropagates through the scorer's layers, so its
  // parameter gradients are used as scratch here and wiped afterwards; the
  // scorer itself only changes on its own optimizer step above.
  zero_grads(gen_->params());
  double loss_ssc_sum = 0.0, loss_g_sum = 0.0;
  for (int b = 0; b < B; ++b) {
    const SceneSample& s = *batch[static_cast<std::size_t>(b)];
    GenActs& a = acts[static_cast<std::size_t>(b)];
    const LabelImage y2d = backproject_labels_2d(s.labels, s.map);
    SscLoss task = ssc_loss_grad(a.vol.logits, s.labels, a.rgb.logits2d, y2d, cfg_.lambda_2d,
                                 cfg_.smooth_eps);
    loss_ssc_sum += task.total;
    Tensor g3 = task.g_logits3d;
    g3.scale(1.0 / B);
    Tensor g2 = task.g_logits2d;
    if (g2.size() > 0) g2.scale(1.0 / B);

    if (cfg_.adversarial) {
      auto af = disc_->forward(probs[static_cast<std::size_t>(b)]);
      loss_g_sum += cfg_.adv_literal_g ? std::log(1.0 - clamp_score(af.p))
                                       : -std::log(clamp_score(af.p));
      Tensor g_in = disc_->backward(af, adv_g_logit_grad(af.p, cfg_.adv_literal_g, B));
      Tensor g_logits = softmax_channels_backward(probs[static_cast<std::size_t>(b)], g_in);
      g3.add_scaled(g_logits, cfg_.beta_adv);
    }
    gen_->backward(a, g3, g2);
    stats.predictions.push_back(argmax_to_labels(a.vol.logits, s.labels.spec));
  }
  opt_g_.step(gen_->params(), lr);
  zero_grads(gen_->params());
  if (cfg_.adversarial) zero_grads(disc_->params());

  stats.loss_ssc = loss_ssc_sum / B;
  stats.loss_g_adv = cfg_.adversarial ? loss_g_sum / B : 0.0;
  stats.loss_all = stats.loss_ssc + cfg_.beta_adv * stats.loss_g_adv;
  return stats;
}

// ---------------------------------------------------------------------------
// Evaluation

MetricsReport evaluate_model(const GeneratorNet& net, const std::vector<SceneSample>& scenes,
                             int classes) {
  AMM_CHECK(!scenes.empty(), ErrCode::kInvalidArgument, "no scenes to evaluate");
  MetricCounts total;
  bool first = true;
  for (const SceneSample& s : scenes) {
    GenActs a = net.forward(s.rgb, s.tsdf, s.map);
    LabelGrid pred = argmax_to_labels(a.vol.logits, s.labels.spec);
    MetricCounts c = accumulate_metrics(pred, s.labels, s.mask, classes);
    if (first) {
      total = std::move(c);
      first = false;
    } else {
      total.add(c);
    }
  }
  return finalize_metrics(total);
}

namespace {

// Clean forward pass over a held-out split: task losses and metrics from the
// untouched scenes, adversarial objective values from a split-specific
// corruption stream so the numbers are comparable across epochs.
CurvePoint eval_curve_point(TrainState& state, const std::vector<SceneSample>& scenes,
                            int epoch, const std::string& split) {
  const TrainConfig& cfg = state.config();
  CurvePoint p;
  p.epoch = epoch;
  p.split = split;

  MetricCounts total;
  bool first = true;
  double loss_sum = 0.0;
  std::vector<double> d_real, d_gen, d_geo, d_sem;
  auto adv_rng = make_rng(cfg.seed, split + "-adv", static_cast<std::uint64_t>(epoch));
  std::uniform_real_distribution<double> geo_p(cfg.pg_min, cfg.pg_max);

  for (const SceneSample& s : scenes) {
    GenActs a = state.generator().forward(s.rgb, s.tsdf, s.map);
    const LabelImage y2d = backproject_labels_2d(s.labels, s.map);
    loss_sum += ssc_loss(a.vol.logits, s.labels, a.rgb.logits2d, y2d, cfg.lambda_2d,
                         cfg.smooth_eps);
    LabelGrid pred = argmax_to_labels(a.vol.logits, s.labels.spec);
    MetricCounts c = accumulate_metrics(pred, s.labels, s.mask, cfg.classes);
    if (first) {
      total = std::move(c);
      first = false;
    } else {
      total.add(c);
    }
    if (cfg.adversarial) {
      Discriminator& disc = *state.discriminator();
      d_real.push_back(disc.forward(labels_to_simplex(s.labels, cfg.classes)).p);
      d_gen.push_back(disc.forward(softmax_channels(a.vol.logits)).p);
      if (cfg.perturb_geo) {
        LabelGrid fake = perturb_geometric(s.labels, geo_p(adv_rng), adv_rng);
        d_geo.push_back(disc.forward(labels_to_simplex(fake, cfg.classes)).p);
      }
      if (cfg.perturb_sem) {
        LabelGrid fake = perturb_semantic(s.labels, cfg.classes, cfg.ps_min, cfg.ps_max, adv_rng);
        d_sem.push_back(disc.forward(labels_to_simplex(fake, cfg.classes)).p);
      }
    }
  }

  MetricsReport report = finalize_metrics(total);
  p.sc_iou = report.sc_iou;
  p.ssc_miou = report.ssc_miou;
  p.loss_ssc = loss_sum / static_cast<double>(scenes.size());
  if (cfg.adversarial) {
    AdvLossValues adv = adv_losses(d_real, d_gen, d_geo, d_sem, cfg.adv_literal_g);
    p.loss_g_adv = adv.loss_g_adv;
    p.loss_d = adv.loss_d;
  }
  return p;
}

void save_training_checkpoint(const fs::path& path, TrainState& state, int epochs_done) {
  ParamList all = state.generator().params();
  nlohmann::json meta{{"train_config", train_config_to_json(state.config())},
                      {"epochs_done", epochs_done}};
  if (state.discriminator() != nullptr) {
    const ParamList& d = state.discriminator()->params();
    all.insert(all.end(), d.begin(), d.end());
    meta["scorer"] = state.discriminator()->manifest();
  }
  save_checkpoint(path.string(), all, meta);
}

[[noreturn]] void record_divergence(const fs::path& out_dir, int epoch, int step,
                                    const StepStats& stats,
                                    const std::vector<CurvePoint>& curves) {
  nlohmann::json j{{"epoch", epoch},
                   {"step", step},
                   {"loss_all", stats.loss_all},
                   {"loss_ssc", stats.loss_ssc},
                   {"loss_g_adv", stats.loss_g_adv},
                   {"loss_d", stats.loss_d}};
  std::ofstream out(out_dir / "divergence.json");
  out << j.dump(2) << "\n";
  write_curves_csv(out_dir / "curves.csv", curves);
  AMM_CHECK(false, ErrCode::kDiverged,
            "non-finite loss at epoch " << epoch << ", step " << step);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& data, const fs::path& out_dir) {
  cfg.validate();
  AMM_CHECK(!data.train.empty(), ErrCode::kInvalidArgument, "training split is empty");
  fs::create_directories(out_dir);

  TrainState state(cfg);
  TrainResult result;
  nlohmann::json step_log = nlohmann::json::array();
  const bool square = cfg.dims[0] == cfg.dims[2];

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_min);
    auto shuffle_rng = make_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    auto augment_rng = make_rng(cfg.seed, "augment", static_cast<std::uint64_t>(epoch));
    auto perturb_rng = make_rng(cfg.seed, "perturb", static_cast<std::uint64_t>(epoch));

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    MetricCounts train_counts;
    bool first_counts = true;
    double sum_ssc = 0.0, sum_g = 0.0, sum_d = 0.0;
    int steps = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<SceneSample> samples;
      samples.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        Augmentation aug = draw_augmentation(augment_rng, square);
        samples.push_back(apply_augmentation(data.train[order[i]], aug));
      }
      std::vector<const SceneSample*> batch;
      for (const SceneSample& s : samples) batch.push_back(&s);

      StepStats st = state.step(batch, lr, perturb_rng);
      if (!std::isfinite(st.loss_all) || !std::isfinite(st.loss_d))
        record_divergence(out_dir, epoch, steps, st, result.curves);

      sum_ssc += st.loss_ssc;
      sum_g += st.loss_g_adv;
      sum_d += st.loss_d;
      ++steps;
      step_log.push_back({{"epoch", epoch},
                          {"lr", lr},
                          {"loss_all", st.loss_all},
                          {"loss_ssc", st.loss_ssc},
                          {"loss_g_adv", st.loss_g_adv},
                          {"loss_d", st.loss_d}});
      // Training-split metrics come from the same augmented views the step
      // consumed, which keeps the epoch free of extra forward passes.
      for (std::size_t b = 0; b < samples.size(); ++b) {
        MetricCounts c =
            accumulate_metrics(st.predictions[b], samples[b].labels, samples[b].mask, cfg.classes);
        if (first_counts) {
          train_counts = std::move(c);
          first_counts = false;
        } else {
          train_counts.add(c);
        }
      }
    }

    MetricsReport train_report = finalize_metrics(train_counts);
    CurvePoint tp;
    tp.epoch = epoch;
    tp.split = "train";
    tp.sc_iou = train_report.sc_iou;
    tp.ssc_miou = train_report.ssc_miou;
    tp.loss_ssc = sum_ssc / steps;
    tp.loss_g_adv = sum_g / steps;
    tp.loss_d = sum_d / steps;
    result.curves.push_back(tp);

    if (!data.val.empty()) result.curves.push_back(eval_curve_point(state, data.val, epoch, "val"));
    // The test split stays untouched during training; it is scored once on
    // the last epoch so the curve file still carries a test row.
    if (!data.test.empty() && epoch + 1 == cfg.epochs)
      result.curves.push_back(eval_curve_point(state, data.test, epoch, "test"));

    if ((epoch + 1) % cfg.ckpt_every == 0 && epoch + 1 < cfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.ammc", epoch + 1);
      save_training_checkpoint(out_dir / name, state, epoch + 1);
    }
  }

  const fs::path final_path = out_dir / "ckpt_final.ammc";
  save_training_checkpoint(final_path, state, cfg.epochs);
  result.final_checkpoint = final_path.string();
  write_curves_csv(out_dir / "curves.csv", result.curves);

  if (!data.test.empty()) {
    result.test_report = evaluate_model(state.generator(), data.test, cfg.classes);
  }
  result.summary = nlohmann::json{{"config", train_config_to_json(cfg)},
                                  {"steps", std::move(step_log)},
                                  {"final_checkpoint", result.final_checkpoint}};
  if (!data.test.empty()) result.summary["test"] = report_to_json(result.test_report);
  std::ofstream sum(out_dir / "summary.json");
  AMM_CHECK(sum.good(), ErrCode::kIoFailure, "cannot write summary.json");
  sum << result.summary.dump(2) << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// Encoder probes

namespace {

struct ProbeInputs {
  Tensor vr, vt, skip;  // zero tensors stand in for the absent branch
};

ProbeInputs probe_inputs_rgb(const RgbEncoder& enc, const SceneSample& s,
                             const GeneratorConfig& gc) {
  ProbeInputs in;
  RgbEncoder::Acts a = enc.forward(rgb_to_tensor(s.rgb));
  in.vr = project_features(a.feat(), s.map).volume;
  in.vt = Tensor({gc.channels, gc.dims[0], gc.dims[1], gc.dims[2]});
  in.skip = Tensor({gc.channels, gc.dims[0] / 2, gc.dims[1] / 2, gc.dims[2] / 2});
  return in;
}

ProbeInputs probe_inputs_tsdf(const TsdfEncoder& enc, const SceneSample& s,
                              const GeneratorConfig& gc) {
  ProbeInputs in;
  TsdfEncoder::Acts a = enc.forward(tsdf_to_tensor(s.tsdf));
  in.vr = Tensor({gc.channels, gc.dims[0], gc.dims[1], gc.dims[2]});
  in.vt = a.u2y;
  in.skip = a.u1y;
  return in;
}

}  // namespace

ProbeResult probe_encoder(const fs::path& ckpt_path, Modality modality, const TrainConfig& cfg,
                          const Dataset& data, const fs::path& out_dir) {
  cfg.validate();
  AMM_CHECK(!data.train.empty() && !data.test.empty(), ErrCode::kInvalidArgument,
            "probe needs training and test scenes");
  fs::create_directories(out_dir);
  const Checkpoint ckpt = load_checkpoint(ckpt_path.string());
  const GeneratorConfig gc = cfg.generator_config();

  // The frozen encoder is rebuilt standalone and filled from the checkpoint;
  // nothing ever writes to it below, its gradients land in tensors the
  // optimizer never sees.
  RgbEncoder rgb_enc;
  TsdfEncoder tsdf_enc;
  ParamList enc_params;
  if (modality == Modality::kRgb) {
    rgb_enc = RgbEncoder("gen/rgb", gc.channels, gc.classes);
    rgb_enc.collect(enc_params);
  } else {
    tsdf_enc = TsdfEncoder("gen/tsdf", gc.channels);
    tsdf_enc.collect(enc_params);
  }
  load_into(ckpt, enc_params);

  // A fresh additive decoder stack; only its own layers train. The probe net
  // still owns encoder submodules, but forward_volumes never touches them.
  GeneratorConfig pc = gc;
  pc.fusion = FusionMode::kAddition;
  pc.site_m1 = pc.site_m2 = pc.site_m3 = false;
  pc.seed = mix_seed(cfg.seed, "probe-init", 0);
  GeneratorNet probe(pc);
  probe.init_params();
  ParamList head;
  for (const ParamRef& p : probe.params())
    if (p.name.rfind("gen/dec/", 0) == 0 || p.name.rfind("gen/score", 0) == 0) head.push_back(p);
  AdamW opt(0.9, 0.999, 1e-8, cfg.weight_decay);
  opt.attach(head);

  // Features are fixed once the encoder is frozen, so they are computed one
  // time per scene. No augmentation here: it would move voxels without
  // moving the cached features.
  const auto cache = [&](const std::vector<SceneSample>& scenes) {
    std::vector<ProbeInputs> out;
    out.reserve(scenes.size());
    for (const SceneSample& s : scenes)
      out.push_back(modality == Modality::kRgb ? probe_inputs_rgb(rgb_enc, s, gc)
                                               : probe_inputs_tsdf(tsdf_enc, s, gc));
    return out;
  };
  const std::vector<ProbeInputs> train_in = cache(data.train);
  const std::vector<ProbeInputs> test_in = cache(data.test);

  double first_loss = 0.0, last_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_min);
    auto shuffle_rng = make_rng(cfg.seed, "probe-shuffle", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const int B = static_cast<int>(stop - start);
      zero_grads(probe.params());
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const ProbeInputs& in = train_in[order[i]];
        const SceneSample& s = data.train[order[i]];
        GenVolumeActs acts = probe.forward_volumes(in.vr, in.vt, in.skip);
        SmoothCeGrad g = smooth_ce_grad(acts.logits, s.labels.labels, cfg.smooth_eps);
        batch_loss += g.loss;
        g.g_logits.scale(1.0 / B);
        probe.backward_volumes(acts, g.g_logits);
      }
      batch_loss /= B;
      AMM_CHECK(std::isfinite(batch_loss), ErrCode::kDiverged,
                "non-finite probe loss at epoch " << epoch);
      opt.step(head, lr);
      epoch_loss += batch_loss;
      ++steps;
    }
    epoch_loss /= steps;
    if (epoch == 0) first_loss = epoch_loss;
    last_loss = epoch_loss;
  }

  MetricCounts total;
  bool first = true;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    GenVolumeActs acts = probe.forward_volumes(test_in[i].vr, test_in[i].vt, test_in[i].skip);
    LabelGrid pred = argmax_to_labels(acts.logits, data.test[i].labels.spec);
    MetricCounts c = accumulate_metrics(pred, data.test[i].labels, data.test[i].mask, cfg.classes);
    if (first) {
      total = std::move(c);
      first = false;
    } else {
      total.add(c);
    }
  }
  MetricsReport report = finalize_metrics(total);

  ProbeResult result;
  result.test_ssc_miou = report.ssc_miou;
  result.details = nlohmann::json{{"modality", modality == Modality::kRgb ? "rgb" : "tsdf"},
                                  {"checkpoint", ckpt_path.string()},
                                  {"epochs", cfg.epochs},
                                  {"train_loss_first_epoch", first_loss},
                                  {"train_loss_last_epoch", last_loss},
                                  {"test", report_to_json(report)}};
  std::ofstream out(out_dir / "probe_report.json");
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "cannot write probe_report.json");
  out << result.details.dump(2) << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// Overfitting summary

OverfitReport overfit_report(const std::vector<CurvePoint>& curves) {
  std::vector<std::pair<int, double>> train, val;
  for (const CurvePoint& p : curves) {
    if (p.split == "train") train.emplace_back(p.epoch, p.ssc_miou);
    else if (p.split == "val") val.emplace_back(p.epoch, p.ssc_miou);
  }
  AMM_CHECK(!train.empty() && !val.empty(), ErrCode::kInvalidArgument,
            "curves must contain both train and val rows");
  AMM_CHECK(train.size() == val.size(), ErrCode::kInvalidArgument,
            "train and val rows do not pair up");
  OverfitReport report;
  double best_val = -1.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    AMM_CHECK(train[i].first == val[i].first, ErrCode::kInvalidArgument,
              "train and val epochs disagree at row " << i);
    report.epochs.push_back(train[i].first);
    report.gaps.push_back(train[i].second - val[i].second);
    if (val[i].second > best_val) {
      best_val = val[i].second;
      report.val_peak_epoch = val[i].first;
    }
  }
  report.final_gap = report.gaps.back();
  return report;
}

}  // namespace ammnet
