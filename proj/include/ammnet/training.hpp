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
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ammnet/discriminator.hpp"
#include "ammnet/generator.hpp"
#include "ammnet/metrics.hpp"
#include "ammnet/voxel_data.hpp"

namespace ammnet {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr_init = 1e-3;
  double lr_min = 1e-7;
  double weight_decay = 0.05;
  double lambda_2d = 0.25;   // weight of the 2D segmentation term
  double beta_adv = 0.005;   // weight of the generator's adversarial term
  double smooth_eps = 0.1;   // label smoothing mass
  FusionMode fusion = FusionMode::kModulation;
  bool site_m1 = true, site_m2 = true, site_m3 = true;
  bool adversarial = true;
  bool adv_literal_g = false;  // minimax-literal generator term instead of -log d
  bool perturb_geo = true;     // feed geometry-erased fakes to the scorer
  bool perturb_sem = true;     // feed semantics-shuffled fakes to the scorer
  double pg_min = 0.1, pg_max = 0.9;
  double ps_min = 0.1, ps_max = 0.9;
  std::uint64_t seed = 0;
  int train_scenes = 64, val_scenes = 16, test_scenes = 16;
  std::array<int, 3> dims{20, 12, 20};
  int channels = 16;
  int classes = 11;
  int ckpt_every = 10;

  void validate() const;
  GeneratorConfig generator_config() const;
  DiscConfig disc_config() const;
  SceneGenConfig scene_config() const;
};

// Strict JSON binding: unknown keys and wrong types are rejected; omitted
// keys keep their defaults. to_json always emits every key, so a stored
// manifest reproduces the run on its own.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// Named configurations: "baseline" (addition fusion, no adversary),
// "ammnet" (modulation everywhere plus adversary), "ammnet-noadv",
// "ammnet-nomod".
TrainConfig preset_config(const std::string& name);

struct Dataset {
  SceneGenConfig scene_cfg;
  std::vector<SceneSample> train, val, test;
};

// Synthesizes the three splits from disjoint index ranges of the scene
// generator; deterministic in (cfg.seed, sizes, scene config).
Dataset build_dataset(const TrainConfig& cfg);

struct CurvePoint {
  int epoch = 0;
  std::string split;  // train | val | test
  double sc_iou = 0.0, ssc_miou = 0.0;
  double loss_ssc = 0.0, loss_g_adv = 0.0, loss_d = 0.0;
};

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curves);
std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path);

// Training-time viewpoint changes: axis flips and the x-z exchange act on
// every voxel-indexed field coherently (labels, distances, visibility, and
// the pixel-to-voxel map); the 2D flip mirrors the image together with the
// pixel side of the map.
struct Augmentation {
  bool flip_x = false, flip_z = false, swap_xz = false, flip_2d = false;
};

Augmentation draw_augmentation(std::mt19937_64& rng, bool allow_swap);
SceneSample apply_augmentation(const SceneSample& sample, const Augmentation& aug);

struct StepStats {
  double loss_all = 0.0, loss_ssc = 0.0, loss_g_adv = 0.0, loss_d = 0.0;
  std::vector<LabelGrid> predictions;  // per-sample argmax, for split metrics
};

// Networks, optimizers, and the per-batch update. Exposed so tests can
// watch parameter evolution between the two phases of a step.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& cfg);

  GeneratorNet& generator() { return *gen_; }
  Discriminator* discriminator() { return disc_.get(); }  // null without adversary

  // One optimization step on one mini batch: a scorer update (when the
  // adversary is enabled) followed by a generator update. The optional hook
  // runs between the two phases. Batch entries must outlive the call.
  StepStats step(const std::vector<const SceneSample*>& batch, double lr,
                 std::mt19937_64& perturb_rng, const std::function<void()>& between_phases = {});

  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  std::unique_ptr<GeneratorNet> gen_;
  std::unique_ptr<Discriminator> disc_;
  AdamW opt_g_, opt_d_;
};

struct TrainResult {
  std::vector<CurvePoint> curves;
  std::string final_checkpoint;
  MetricsReport test_report;  // final-model metrics on the test split
  nlohmann::json summary;     // per-step losses and bookkeeping
};

// Full run: writes curves.csv, periodic and final checkpoints, and
// summary.json under out_dir. A non-finite loss aborts with a diagnostic
// record (divergence.json) and a raised error.
TrainResult train(const TrainConfig& cfg, const Dataset& data,
                  const std::filesystem::path& out_dir);

// Dataset-level metrics of a trained model over a scene list.
MetricsReport evaluate_model(const GeneratorNet& net, const std::vector<SceneSample>& scenes,
                             int classes);

enum class Modality { kRgb, kTsdf };

struct ProbeResult {
  double test_ssc_miou = 0.0;
  nlohmann::json details;
};

// Loads one frozen encoder from a checkpoint, trains a fresh decoder on top
// of its cached features (no augmentation, 3D loss only), and reports test
// mIoU. The other modality's branch does not exist in the probe network.
ProbeResult probe_encoder(const std::filesystem::path& ckpt_path, Modality modality,
                          const TrainConfig& cfg, const Dataset& data,
                          const std::filesystem::path& out_dir);

struct OverfitReport {
  std::vector<int> epochs;
  std::vector<double> gaps;  // train - val mean-IoU per epoch
  double final_gap = 0.0;
  int val_peak_epoch = 0;
};

// Train/validation divergence summary over a curve set; both splits must be
// present. Ties on the validation peak resolve to the earliest epoch.
OverfitReport overfit_report(const std::vector<CurvePoint>& curves);

}  // namespace ammnet
