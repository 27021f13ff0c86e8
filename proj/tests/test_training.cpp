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
// Training-loop checks at toy scale: strict config parsing, dataset
// determinism, augmentation coherence, the two-phase step discipline, the
// files a run leaves behind, and run-to-run reproducibility.

#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "ammnet/checkpoint.hpp"
#include "ammnet/metrics.hpp"
#include "ammnet/rng.hpp"
#include "ammnet/training.hpp"
#include "test_support.hpp"

using namespace ammnet;
using ammtest::TempDir;
using ammtest::max_abs_diff;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.train_scenes = 6;
  cfg.val_scenes = 2;
  cfg.test_scenes = 2;
  cfg.dims = {8, 4, 8};
  cfg.channels = 4;
  cfg.classes = 5;
  cfg.seed = 1;
  cfg.ckpt_every = 1;
  return cfg;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Copies the current values of a parameter list.
std::vector<Tensor> snapshot(const ParamList& params) {
  std::vector<Tensor> out;
  for (const ParamRef& pr : params) out.push_back(*pr.value);
  return out;
}

double max_param_delta(const ParamList& params, const std::vector<Tensor>& snap) {
  double m = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    m = std::max(m, max_abs_diff(*params[i].value, snap[i]));
  return m;
}

}  // namespace

TEST_CASE("config json binding is strict about keys and types") {
  // Partial documents keep defaults for everything unspecified.
  const TrainConfig cfg = train_config_from_json({{"epochs", 7}, {"beta_adv", 0.01}});
  CHECK(cfg.epochs == 7);
  CHECK(cfg.beta_adv == 0.01);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.lambda_2d == 0.25);
  CHECK(cfg.adversarial);

  CHECK_THROWS_AS(train_config_from_json({{"epoch", 7}}), AmmError);       // misspelled
  CHECK_THROWS_AS(train_config_from_json({{"epochs", "7"}}), AmmError);    // wrong type
  CHECK_THROWS_AS(train_config_from_json({{"fusion", "blend"}}), AmmError);

  // A serialized config reproduces itself field for field.
  TrainConfig full = tiny_config();
  full.fusion = FusionMode::kAddition;
  full.site_m1 = full.site_m2 = full.site_m3 = false;
  full.adv_literal_g = true;
  full.pg_min = 0.2;
  const TrainConfig back = train_config_from_json(train_config_to_json(full));
  CHECK(train_config_to_json(back) == train_config_to_json(full));
}

TEST_CASE("presets describe the four studied configurations") {
  const TrainConfig full = preset_config("ammnet");
  CHECK(full.fusion == FusionMode::kModulation);
  CHECK((full.site_m1 && full.site_m2 && full.site_m3));
  CHECK(full.adversarial);

  const TrainConfig base = preset_config("baseline");
  CHECK(base.fusion == FusionMode::kAddition);
  CHECK_FALSE(base.site_m1);
  CHECK_FALSE(base.adversarial);

  const TrainConfig noadv = preset_config("ammnet-noadv");
  CHECK(noadv.fusion == FusionMode::kModulation);
  CHECK_FALSE(noadv.adversarial);

  const TrainConfig nomod = preset_config("ammnet-nomod");
  CHECK(nomod.fusion == FusionMode::kAddition);
  CHECK(nomod.adversarial);

  CHECK_THROWS_AS(preset_config("deluxe"), AmmError);
}

TEST_CASE("dataset synthesis is deterministic with disjoint split indices") {
  const TrainConfig cfg = tiny_config();
  const Dataset a = build_dataset(cfg);
  const Dataset b = build_dataset(cfg);
  REQUIRE(a.train.size() == 6);
  REQUIRE(a.val.size() == 2);
  REQUIRE(a.test.size() == 2);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].labels.labels == b.train[i].labels.labels);
    CHECK(a.train[i].tsdf.values == b.train[i].tsdf.values);
  }

  std::set<std::uint64_t> indices;
  for (const auto& s : a.train) indices.insert(s.index);
  for (const auto& s : a.val) indices.insert(s.index);
  for (const auto& s : a.test) indices.insert(s.index);
  CHECK(indices.size() == 10);  // all distinct

  // Validation content does not depend on the training split size.
  TrainConfig wider = cfg;
  wider.train_scenes = 9;
  const Dataset c = build_dataset(wider);
  for (std::size_t i = 0; i < a.val.size(); ++i) {
    CHECK(c.val[i].labels.labels == a.val[i].labels.labels);
  }

  TrainConfig other = cfg;
  other.seed = 2;
  const Dataset d = build_dataset(other);
  CHECK(d.train[0].labels.labels != a.train[0].labels.labels);
}

TEST_CASE("augmentation coins keep the stream layout when the exchange is barred") {
  std::mt19937_64 with_swap = make_rng(4, "augment");
  std::mt19937_64 without = make_rng(4, "augment");
  for (int i = 0; i < 20; ++i) {
    const Augmentation a = draw_augmentation(with_swap, true);
    const Augmentation b = draw_augmentation(without, false);
    CHECK_FALSE(b.swap_xz);
    CHECK(a.flip_x == b.flip_x);
    CHECK(a.flip_z == b.flip_z);
    CHECK(a.flip_2d == b.flip_2d);
  }
  // Both engines drew the same number of values.
  CHECK(with_swap() == without());
}

TEST_CASE("each augmentation flag is an involution on every voxel field") {
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const SceneSample& scene = data.train[0];

  const auto roundtrip = [&](const Augmentation& aug) {
    const SceneSample once = apply_augmentation(scene, aug);
    const SceneSample twice = apply_augmentation(once, aug);
    CHECK(twice.labels.labels == scene.labels.labels);
    CHECK(twice.tsdf.values == scene.tsdf.values);
    CHECK(twice.mask.states == scene.mask.states);
    CHECK(twice.map.voxel_of_pixel == scene.map.voxel_of_pixel);
    CHECK(twice.rgb.values == scene.rgb.values);
    CHECK(twice.depth.values == scene.depth.values);
    CHECK(twice.semantic2d.values == scene.semantic2d.values);
  };
  roundtrip({true, false, false, false});
  roundtrip({false, true, false, false});
  roundtrip({false, false, true, false});  // dims are 8x4x8, square footprint
  roundtrip({false, false, false, true});
}

TEST_CASE("voxel flips permute the grids and remap the projection targets") {
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const SceneSample& scene = data.train[1];
  const GridSpec& spec = scene.labels.spec;

  Augmentation aug;
  aug.flip_x = true;
  const SceneSample out = apply_augmentation(scene, aug);

  for (int i = 0; i < spec.dims[0]; ++i)
    for (int j = 0; j < spec.dims[1]; ++j)
      for (int k = 0; k < spec.dims[2]; ++k) {
        const auto src = static_cast<std::size_t>(spec.linear(i, j, k));
        const auto dst = static_cast<std::size_t>(spec.linear(spec.dims[0] - 1 - i, j, k));
        CHECK(out.labels.labels[dst] == scene.labels.labels[src]);
        CHECK(out.tsdf.values[dst] == scene.tsdf.values[src]);
        CHECK(out.mask.states[dst] == scene.mask.states[src]);
      }

  // Pixels stay put; their voxel ids follow the permutation.
  for (std::size_t p = 0; p < out.map.voxel_of_pixel.size(); ++p) {
    const std::int64_t v = scene.map.voxel_of_pixel[p];
    if (v < 0) {
      CHECK(out.map.voxel_of_pixel[p] == -1);
      continue;
    }
    const int i = static_cast<int>(v / (spec.dims[1] * spec.dims[2]));
    const std::int64_t rem = v % (spec.dims[1] * spec.dims[2]);
    const std::int64_t want =
        spec.linear(spec.dims[0] - 1 - i, static_cast<int>(rem / spec.dims[2]),
                    static_cast<int>(rem % spec.dims[2]));
    CHECK(out.map.voxel_of_pixel[p] == want);
  }
  // Image-side fields are untouched by a 3D-only flip.
  CHECK(out.rgb.values == scene.rgb.values);
  CHECK(out.depth.values == scene.depth.values);
}

TEST_CASE("the 2d flip mirrors images together with the map's pixel side") {
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const SceneSample& scene = data.train[2];

  Augmentation aug;
  aug.flip_2d = true;
  const SceneSample out = apply_augmentation(scene, aug);

  const int w = scene.rgb.width, h = scene.rgb.height;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      CHECK(out.depth.at(u, v) == scene.depth.at(w - 1 - u, v));
      CHECK(out.semantic2d.at(u, v) == scene.semantic2d.at(w - 1 - u, v));
      for (int c = 0; c < 3; ++c) CHECK(out.rgb.at(c, u, v) == scene.rgb.at(c, w - 1 - u, v));
      CHECK(out.map.voxel_of_pixel[static_cast<std::size_t>(v) * w + u] ==
            scene.map.voxel_of_pixel[static_cast<std::size_t>(v) * w + (w - 1 - u)]);
    }
  // Voxel grids are untouched by the image flip.
  CHECK(out.labels.labels == scene.labels.labels);
  CHECK(out.tsdf.values == scene.tsdf.values);
}

TEST_CASE("the exchange refuses rectangular footprints") {
  TrainConfig cfg = tiny_config();
  cfg.dims = {8, 4, 12};
  const Dataset data = build_dataset(cfg);
  Augmentation aug;
  aug.swap_xz = true;
  CHECK_THROWS_AS(apply_augmentation(data.train[0], aug), AmmError);
}

TEST_CASE("one optimization step updates the scorer first and freezes it after") {
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  TrainState state(cfg);
  REQUIRE(state.discriminator() != nullptr);

  const std::vector<const SceneSample*> batch = {&data.train[0], &data.train[1]};
  std::mt19937_64 perturb_rng = make_rng(cfg.seed, "perturb");

  const std::vector<Tensor> d_before = snapshot(state.discriminator()->params());
  const std::vector<Tensor> g_before = snapshot(state.generator().params());

  std::vector<Tensor> d_mid, g_mid;
  const StepStats stats = state.step(batch, 1e-3, perturb_rng, [&]() {
    d_mid = snapshot(state.discriminator()->params());
    g_mid = snapshot(state.generator().params());
  });

  REQUIRE(!d_mid.empty());
  // Phase one moved the scorer; the generator waits for phase two.
  CHECK(max_param_delta(state.discriminator()->params(), d_before) > 0.0);
  CHECK(max_param_delta(state.discriminator()->params(), d_mid) == 0.0);
  double g_moved_in_phase_one = 0.0;
  for (std::size_t i = 0; i < g_mid.size(); ++i)
    g_moved_in_phase_one = std::max(g_moved_in_phase_one, max_abs_diff(g_mid[i], g_before[i]));
  CHECK(g_moved_in_phase_one == 0.0);
  CHECK(max_param_delta(state.generator().params(), g_mid) > 0.0);

  CHECK(std::isfinite(stats.loss_all));
  CHECK(stats.loss_ssc > 0.0);
  CHECK(stats.loss_d > 0.0);
  CHECK(stats.predictions.size() == batch.size());

  // The combined objective is the published weighting of its parts.
  CHECK(stats.loss_all ==
        doctest::Approx(stats.loss_ssc + cfg.beta_adv * stats.loss_g_adv).epsilon(1e-12));
}

TEST_CASE("without the adversary a step trains the generator alone") {
  TrainConfig cfg = tiny_config();
  cfg.adversarial = false;
  const Dataset data = build_dataset(cfg);
  TrainState state(cfg);
  CHECK(state.discriminator() == nullptr);

  const std::vector<const SceneSample*> batch = {&data.train[0], &data.train[1]};
  std::mt19937_64 perturb_rng = make_rng(cfg.seed, "perturb");
  const std::vector<Tensor> g_before = snapshot(state.generator().params());
  const StepStats stats = state.step(batch, 1e-3, perturb_rng);
  CHECK(max_param_delta(state.generator().params(), g_before) > 0.0);
  CHECK(stats.loss_d == 0.0);
  CHECK(stats.loss_g_adv == 0.0);
  CHECK(stats.loss_all == stats.loss_ssc);
}

TEST_CASE("a tiny run writes curves, checkpoints, and a summary") {
  TempDir tmp("ammtrain");
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const TrainResult result = train(cfg, data, tmp.path());

  CHECK(std::filesystem::exists(tmp.path() / "curves.csv"));
  CHECK(std::filesystem::exists(tmp.path() / "ckpt_epoch_001.ammc"));
  CHECK(std::filesystem::exists(tmp.path() / "ckpt_final.ammc"));
  CHECK(std::filesystem::exists(tmp.path() / "summary.json"));
  CHECK(result.final_checkpoint == (tmp.path() / "ckpt_final.ammc").string());

  // Per epoch one train and one val row, plus a test row on the last epoch.
  REQUIRE(result.curves.size() == 5);
  CHECK(result.curves[0].split == "train");
  CHECK(result.curves[1].split == "val");
  CHECK(result.curves[4].split == "test");
  CHECK(result.curves[4].epoch == cfg.epochs - 1);
  const std::vector<CurvePoint> from_disk = read_curves_csv(tmp.path() / "curves.csv");
  REQUIRE(from_disk.size() == result.curves.size());
  for (std::size_t i = 0; i < from_disk.size(); ++i) {
    CHECK(from_disk[i].split == result.curves[i].split);
    CHECK(from_disk[i].ssc_miou == doctest::Approx(result.curves[i].ssc_miou).epsilon(1e-12));
  }

  // The final checkpoint reloads into a fresh network.
  const Checkpoint ckpt = load_checkpoint(result.final_checkpoint);
  GeneratorNet net(cfg.generator_config());
  load_into(ckpt, net.params());
  CHECK(ckpt.meta.at("epochs_done").get<int>() == cfg.epochs);

  // Metrics in the result match a separate evaluation of the final model.
  const MetricsReport re = evaluate_model(net, data.test, cfg.classes);
  CHECK(re.ssc_miou == doctest::Approx(result.test_report.ssc_miou).epsilon(1e-12));
  CHECK(re.sc_iou == doctest::Approx(result.test_report.sc_iou).epsilon(1e-12));
}

TEST_CASE("equal-seed runs leave bitwise identical artifacts") {
  TempDir tmp_a("ammrun_a");
  TempDir tmp_b("ammrun_b");
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  train(cfg, data, tmp_a.path());
  train(cfg, data, tmp_b.path());
  CHECK(slurp(tmp_a.path() / "curves.csv") == slurp(tmp_b.path() / "curves.csv"));
  CHECK(slurp(tmp_a.path() / "ckpt_final.ammc") == slurp(tmp_b.path() / "ckpt_final.ammc"));
}

TEST_CASE("a diverging run aborts with a diagnostic record") {
  TempDir tmp("ammdiv");
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.lr_init = 1e14;  // guaranteed blow-up
  cfg.lr_min = 1e14;
  const Dataset data = build_dataset(cfg);
  CHECK_THROWS_AS(train(cfg, data, tmp.path()), AmmError);
  CHECK(std::filesystem::exists(tmp.path() / "divergence.json"));
}

TEST_CASE("evaluate_model equals a by-hand pass over the scenes") {
  const TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  GeneratorNet net(cfg.generator_config());
  net.init_params();

  const MetricsReport got = evaluate_model(net, data.val, cfg.classes);

  MetricCounts total;
  bool first = true;
  for (const SceneSample& scene : data.val) {
    const GenActs acts = net.forward(scene.rgb, scene.tsdf, scene.map);
    const LabelGrid pred = argmax_to_labels(acts.vol.logits, scene.labels.spec);
    const MetricCounts c = accumulate_metrics(pred, scene.labels, scene.mask, cfg.classes);
    if (first) {
      total = c;
      first = false;
    } else {
      total.add(c);
    }
  }
  const MetricsReport want = finalize_metrics(total);
  CHECK(got.ssc_miou == want.ssc_miou);
  CHECK(got.sc_iou == want.sc_iou);
  CHECK(got.sc_precision == want.sc_precision);
  CHECK(got.per_class_iou == want.per_class_iou);
}

TEST_CASE("train and validation divergence is summarized per epoch") {
  std::vector<CurvePoint> curves;
  const double train_miou[] = {0.2, 0.4, 0.6, 0.7};
  const double val_miou[] = {0.15, 0.35, 0.5, 0.5};
  for (int e = 0; e < 4; ++e) {
    CurvePoint t;
    t.epoch = e;
    t.split = "train";
    t.ssc_miou = train_miou[e];
    curves.push_back(t);
    CurvePoint v;
    v.epoch = e;
    v.split = "val";
    v.ssc_miou = val_miou[e];
    curves.push_back(v);
  }
  // An extra test row must not disturb the report.
  CurvePoint te;
  te.epoch = 3;
  te.split = "test";
  te.ssc_miou = 0.42;
  curves.push_back(te);

  const OverfitReport rep = overfit_report(curves);
  REQUIRE(rep.epochs.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(rep.gaps[static_cast<std::size_t>(e)] ==
          doctest::Approx(train_miou[e] - val_miou[e]).epsilon(1e-15));
  }
  CHECK(rep.final_gap == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rep.val_peak_epoch == 2);  // the tie at 0.5 resolves to the earlier epoch

  std::vector<CurvePoint> train_only(curves.begin(), curves.begin() + 1);
  CHECK_THROWS_AS(overfit_report(train_only), AmmError);
}

TEST_CASE("a frozen encoder can be probed from a run's checkpoint") {
  TempDir tmp("ammprobe");
  TrainConfig cfg = tiny_config();
  const Dataset data = build_dataset(cfg);
  const TrainResult result = train(cfg, data, tmp.path());

  const ProbeResult probe = probe_encoder(result.final_checkpoint, Modality::kTsdf, cfg, data,
                                          tmp.path() / "probe");
  CHECK(probe.test_ssc_miou >= 0.0);
  CHECK(probe.test_ssc_miou <= 1.0);
  CHECK(probe.details.contains("modality"));

  const ProbeResult rgb = probe_encoder(result.final_checkpoint, Modality::kRgb, cfg, data,
                                        tmp.path() / "probe_rgb");
  CHECK(rgb.test_ssc_miou >= 0.0);
  CHECK(rgb.test_ssc_miou <= 1.0);
}
