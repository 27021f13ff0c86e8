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

#include "ammnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ammnet/checkpoint.hpp"
#include "ammnet/error.hpp"
#include "ammnet/grid_io.hpp"
#include "ammnet/losses.hpp"
#include "ammnet/perturb.hpp"
#include "ammnet/rng.hpp"
#include "ammnet/util.hpp"

namespace ammnet {

namespace fs = std::filesystem;

namespace {

TrainConfig resolve_config(const std::string& config_path, const std::string& preset,
                           const std::optional<std::uint64_t>& seed) {
  TrainConfig cfg;
  if (!preset.empty()) {
    cfg = preset_config(preset);
  } else if (!config_path.empty()) {
    std::ifstream in(config_path);
    AMM_CHECK(in.good(), ErrCode::kIoFailure, "cannot open config " << config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      AMM_CHECK(false, ErrCode::kBadConfig, "invalid JSON in " << config_path << ": " << e.what());
    }
    // A manifest written by an earlier run re-runs as-is: the embedded
    // config is picked up transparently.
    if (j.is_object() && j.contains("config")) j = j.at("config");
    cfg = train_config_from_json(j);
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "cannot write " << path.string());
  out << j.dump(2) << "\n";
  out.flush();
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "failed writing " << path.string());
}

void write_manifest(const fs::path& out_dir, const std::string& command, const TrainConfig& cfg,
                    nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j{{"command", command},
                   {"tool_version", kVersion},
                   {"seed", cfg.seed},
                   {"config", train_config_to_json(cfg)}};
  for (auto& [key, value] : extra.items()) j[key] = value;
  write_json_file(out_dir / "manifest.json", j);
}

int cmd_gen_data(const TrainConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  Dataset data = build_dataset(cfg);
  const auto dump_split = [&](const char* split, const std::vector<SceneSample>& scenes) {
    fs::create_directories(out / split);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%04zu", i);
      save_scene_bundle((out / split / name).string(), scenes[i], data.scene_cfg);
    }
  };
  dump_split("train", data.train);
  dump_split("val", data.val);
  dump_split("test", data.test);
  write_manifest(out, "gen-data", cfg,
                 {{"splits",
                   {{"train", data.train.size()}, {"val", data.val.size()},
                    {"test", data.test.size()}}}});
  std::cout << "wrote " << (data.train.size() + data.val.size() + data.test.size())
            << " scenes under " << out.string() << "\n";
  return 0;
}

int cmd_train(const TrainConfig& cfg, const fs::path& out, bool svg, const std::string& preset) {
  Dataset data = build_dataset(cfg);
  TrainResult result = train(cfg, data, out);
  nlohmann::json extra = nlohmann::json::object();
  if (!preset.empty()) extra["preset"] = preset;
  write_manifest(out, "train", cfg, extra);
  if (svg) {
    std::ofstream sf(out / "curves.svg");
    AMM_CHECK(sf.good(), ErrCode::kIoFailure, "cannot write curves.svg");
    sf << render_curves_svg(result.curves);
  }
  std::cout << "trained " << cfg.epochs << " epochs; test mean IoU "
            << format_double(result.test_report.ssc_miou) << ", occupancy IoU "
            << format_double(result.test_report.sc_iou) << "; checkpoint "
            << result.final_checkpoint << "\n";
  return 0;
}

std::vector<SceneSample> load_scene_dir(const fs::path& data_dir) {
  AMM_CHECK(fs::is_directory(data_dir), ErrCode::kIoFailure,
            data_dir.string() << " is not a directory");
  std::vector<fs::path> bundles;
  for (const auto& entry : fs::recursive_directory_iterator(data_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
      bundles.push_back(entry.path());
  }
  std::sort(bundles.begin(), bundles.end());
  AMM_CHECK(!bundles.empty(), ErrCode::kIoFailure,
            "no scene bundles found under " << data_dir.string());
  std::vector<SceneSample> scenes;
  scenes.reserve(bundles.size());
  for (const fs::path& b : bundles) scenes.push_back(load_scene_bundle(b.string()).sample);
  return scenes;
}

int cmd_eval(const std::string& ckpt_path, const fs::path& data_dir, const fs::path& out) {
  fs::create_directories(out);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  AMM_CHECK(ckpt.meta.contains("train_config"), ErrCode::kBadConfig,
            "checkpoint lacks an embedded train config");
  TrainConfig cfg = train_config_from_json(ckpt.meta.at("train_config"));
  GeneratorNet net(cfg.generator_config());
  net.init_params();
  load_into(ckpt, net.params());

  std::vector<SceneSample> scenes = load_scene_dir(data_dir);
  MetricsReport report = evaluate_model(net, scenes, cfg.classes);
  write_json_file(out / "report.json", report_to_json(report));
  write_manifest(out, "eval", cfg,
                 {{"ckpt", ckpt_path}, {"data", data_dir.string()}, {"scenes", scenes.size()}});
  std::cout << "evaluated " << scenes.size() << " scenes: mean IoU "
            << format_double(report.ssc_miou) << ", occupancy IoU "
            << format_double(report.sc_iou) << "\n";
  return 0;
}

// Freshly initialized biases are zero, which parks every site of a dead
// channel exactly on its ReLU kink; central differences then report half the
// one-sided slope where the analytic pass reports the (equally valid)
// subgradient zero. Small positive biases move the check away from the kinks
// and keep more units alive, so the comparison is meaningful everywhere.
void randomize_biases(const ParamList& params, std::mt19937_64& rng) {
  for (const ParamRef& p : params) {
    if (p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, "/b") == 0)
      fill_uniform(*p.value, rng, 0.05, 0.15);
  }
}

// Worst relative error over a few probed entries of one parameter tensor.
// A random draw occasionally parks a ReLU kink inside the probe window; the
// wide-step estimate is then off even though the gradient is right, so a
// disagreement is retried with the same probes at a tenth of the step. A
// genuine gradient defect keeps both estimates wrong together.
double probed_rel_err(const std::function<double()>& loss_fn, const ParamRef& p,
                      std::mt19937_64& probe_rng) {
  const std::mt19937_64 same_picks = probe_rng;
  double best = max_rel_err_fd(loss_fn, p.value->data(), p.grad->data(), p.value->size(), 2,
                               probe_rng, 1e-5);
  for (const double step : {1e-6, 1e-7}) {
    if (best <= 1e-5) break;
    std::mt19937_64 picks = same_picks;
    best = std::min(best, max_rel_err_fd(loss_fn, p.value->data(), p.grad->data(),
                                         p.value->size(), 2, picks, step));
  }
  return best;
}

// One generator case: random inputs through the full network, task loss,
// analytic parameter gradients against central differences.
double gradcheck_generator(std::uint64_t seed, std::uint64_t index, bool modulated) {
  GeneratorConfig gc;
  gc.channels = 4;
  gc.dims = {8, 4, 8};
  gc.classes = 3;
  gc.image_w = 16;
  gc.image_h = 16;
  if (!modulated) {
    gc.fusion = FusionMode::kAddition;
    gc.site_m1 = gc.site_m2 = gc.site_m3 = false;
  }
  gc.seed = mix_seed(seed, "gradcheck-net", index);
  GeneratorNet net(gc);
  net.init_params();

  auto rng = make_rng(seed, "gradcheck-data", index);
  randomize_biases(net.params(), rng);
  RgbImage rgb;
  rgb.width = gc.image_w;
  rgb.height = gc.image_h;
  rgb.values.resize(static_cast<std::size_t>(3) * gc.image_w * gc.image_h);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (float& v : rgb.values) v = static_cast<float>(unit(rng));

  GridSpec spec;
  spec.dims = gc.dims;
  spec.voxel_size = 0.1;
  spec.origin = {-0.4, -0.2, 1.0};
  TsdfGrid tsdf{spec, {}};
  tsdf.values.resize(static_cast<std::size_t>(spec.voxel_count()));
  std::uniform_real_distribution<double> sd(-1.0, 1.0);
  for (float& v : tsdf.values) v = static_cast<float>(sd(rng));

  LabelGrid gt{spec, {}};
  gt.labels.resize(tsdf.values.size());
  std::uniform_int_distribution<int> cls(0, gc.classes);
  std::uniform_int_distribution<int> pct(0, 9);
  for (std::uint8_t& l : gt.labels)
    l = pct(rng) == 0 ? kIgnoreLabel : static_cast<std::uint8_t>(cls(rng));

  ProjectionMap map;
  map.width = gc.image_w;
  map.height = gc.image_h;
  map.spec = spec;
  map.voxel_of_pixel.resize(static_cast<std::size_t>(map.width) * map.height);
  std::uniform_int_distribution<std::int64_t> vox(0, spec.voxel_count() - 1);
  for (std::int64_t& v : map.voxel_of_pixel) v = pct(rng) < 7 ? vox(rng) : -1;

  const LabelImage y2d = backproject_labels_2d(gt, map);
  const double lambda = 0.25, eps = 0.1;

  zero_grads(net.params());
  GenActs acts = net.forward(rgb, tsdf, map);
  SscLoss task = ssc_loss_grad(acts.vol.logits, gt, acts.rgb.logits2d, y2d, lambda, eps);
  net.backward(acts, task.g_logits3d, task.g_logits2d);

  const auto loss_fn = [&]() {
    GenActs a = net.forward(rgb, tsdf, map);
    return ssc_loss(a.vol.logits, gt, a.rgb.logits2d, y2d, lambda, eps);
  };
  double worst = 0.0;
  auto probe_rng = make_rng(seed, "gradcheck-probe", index);
  for (const ParamRef& p : net.params()) worst = std::max(worst, probed_rel_err(loss_fn, p, probe_rng));
  return worst;
}

// One scorer case: real-target log loss of a random soft assignment.
double gradcheck_discriminator(std::uint64_t seed, std::uint64_t index) {
  DiscConfig dc;
  dc.channels = 4;
  dc.classes = 3;
  dc.dims = {8, 4, 8};
  dc.hidden = 8;
  dc.seed = mix_seed(seed, "gradcheck-net", index);
  Discriminator disc(dc);
  disc.init_params();

  auto rng = make_rng(seed, "gradcheck-data", index);
  randomize_biases(disc.params(), rng);
  Tensor logits({dc.classes + 1, dc.dims[0], dc.dims[1], dc.dims[2]});
  fill_normal(logits, rng, 1.0);
  const Tensor x = softmax_channels(logits);

  zero_grads(disc.params());
  Discriminator::Acts acts = disc.forward(x);
  disc.backward(acts, acts.p - 1.0);  // d(-log p)/dlogit

  const auto loss_fn = [&]() { return -std::log(clamp_score(disc.forward(x).p)); };
  double worst = 0.0;
  auto probe_rng = make_rng(seed, "gradcheck-probe", index);
  for (const ParamRef& p : disc.params()) worst = std::max(worst, probed_rel_err(loss_fn, p, probe_rng));
  return worst;
}

int cmd_gradcheck(std::uint64_t seed, int cases, const fs::path& out) {
  AMM_CHECK(cases >= 1, ErrCode::kInvalidArgument, "need at least one case");
  fs::create_directories(out);
  const double tolerance = 1e-4;
  nlohmann::json rows = nlohmann::json::array();
  double overall = 0.0;
  for (int c = 0; c < cases; ++c) {
    const auto index = static_cast<std::uint64_t>(c);
    double err = 0.0;
    const char* kind = nullptr;
    switch (c % 3) {
      case 0:
        kind = "generator-modulated";
        err = gradcheck_generator(seed, index, true);
        break;
      case 1:
        kind = "generator-additive";
        err = gradcheck_generator(seed, index, false);
        break;
      default:
        kind = "scorer";
        err = gradcheck_discriminator(seed, index);
        break;
    }
    overall = std::max(overall, err);
    rows.push_back({{"case", c}, {"kind", kind}, {"max_rel_err", err}});
  }
  const bool pass = overall < tolerance;
  write_json_file(out / "gradcheck.json", {{"cases", rows},
                                           {"max_rel_err", overall},
                                           {"tolerance", tolerance},
                                           {"pass", pass}});
  TrainConfig cfg;
  cfg.seed = seed;
  write_manifest(out, "gradcheck", cfg, {{"cases", cases}});
  std::cout << "gradcheck over " << cases << " cases: max relative error "
            << format_double(overall) << (pass ? " (pass)" : " (FAIL)") << "\n";
  AMM_CHECK(pass, ErrCode::kInternal, "gradient check exceeded tolerance");
  return 0;
}

int cmd_perturb(const TrainConfig& cfg, const std::string& kind, double p, const fs::path& out) {
  AMM_CHECK(kind == "geo" || kind == "sem", ErrCode::kInvalidArgument,
            "perturbation kind must be geo or sem");
  AMM_CHECK(p >= 0.0 && p <= 1.0, ErrCode::kInvalidArgument, "probability must lie in [0, 1]");
  fs::create_directories(out);
  SceneSample scene = gen_synthetic_scene(cfg.scene_config(), cfg.seed, 0);
  auto rng = make_rng(cfg.seed, "perturb-preview", 0);
  PerturbRecord record;
  LabelGrid after = kind == "geo"
                        ? perturb_geometric(scene.labels, p, rng, &record)
                        : perturb_semantic(scene.labels, cfg.classes, p, p, rng, &record);
  write_u8_grid((out / "before.ammv").string(), scene.labels.spec.dims, scene.labels.labels);
  write_u8_grid((out / "after.ammv").string(), after.spec.dims, after.labels);
  nlohmann::json rec_json;
  to_json(rec_json, record);
  write_json_file(out / "record.json", {{"kind", kind}, {"p", p}, {"record", rec_json}});
  write_manifest(out, "perturb", cfg, {{"kind", kind}, {"p", p}});
  std::cout << "perturbed " << record.changed << " of " << record.candidates
            << " candidate voxels\n";
  return 0;
}

int cmd_probe(const TrainConfig& cfg, const std::string& ckpt, const std::string& modality,
              const fs::path& out) {
  AMM_CHECK(modality == "rgb" || modality == "tsdf", ErrCode::kInvalidArgument,
            "modality must be rgb or tsdf");
  Dataset data = build_dataset(cfg);
  ProbeResult result = probe_encoder(ckpt, modality == "rgb" ? Modality::kRgb : Modality::kTsdf,
                                     cfg, data, out);
  write_manifest(out, "probe", cfg, {{"ckpt", ckpt}, {"modality", modality}});
  std::cout << "probe (" << modality << "): test mean IoU "
            << format_double(result.test_ssc_miou) << "\n";
  return 0;
}

}  // namespace

std::vector<std::string> ablate_preset_names() {
  return {"t3-baseline", "t3-adv",  "t3-mod",     "t3-full",    "t4-none",   "t4-m1",
          "t4-m1m2",     "t4-full", "t6-none",    "t6-geo",     "t6-sem",    "t6-both",
          "beta-0.0005", "beta-0.001", "beta-0.005", "beta-0.01", "beta-0.05",
          "pg-0.1",      "pg-0.3",  "pg-0.5",     "pg-0.7",     "pg-0.9",
          "ps-0.1",      "ps-0.3",  "ps-0.5",     "ps-0.7",     "ps-0.9"};
}

TrainConfig ablate_config(const std::string& name) {
  // Component rows: fusion mode crossed with the adversary.
  if (name == "t3-baseline") return preset_config("baseline");
  if (name == "t3-adv") return preset_config("ammnet-nomod");
  if (name == "t3-mod") return preset_config("ammnet-noadv");
  if (name == "t3-full") return preset_config("ammnet");
  // Progressive modulation sites, adversary kept on throughout.
  if (name == "t4-none") return preset_config("ammnet-nomod");
  if (name == "t4-m1" || name == "t4-m1m2" || name == "t4-full") {
    TrainConfig cfg = preset_config("ammnet");
    cfg.site_m2 = name != "t4-m1";
    cfg.site_m3 = name == "t4-full";
    return cfg;
  }
  // Which corrupted-real fakes the scorer sees.
  if (name == "t6-none" || name == "t6-geo" || name == "t6-sem" || name == "t6-both") {
    TrainConfig cfg = preset_config("ammnet");
    cfg.perturb_geo = name == "t6-geo" || name == "t6-both";
    cfg.perturb_sem = name == "t6-sem" || name == "t6-both";
    return cfg;
  }
  // Hyperparameter sweeps; the probability sweeps pin the sampled range to a
  // single value so the swept knob is the only difference between rows.
  const auto parse_value = [&](const std::string& prefix) -> std::optional<double> {
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    try {
      return std::stod(name.substr(prefix.size()));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  if (auto v = parse_value("beta-")) {
    TrainConfig cfg = preset_config("ammnet");
    cfg.beta_adv = *v;
    return cfg;
  }
  if (auto v = parse_value("pg-")) {
    TrainConfig cfg = preset_config("ammnet");
    cfg.pg_min = cfg.pg_max = *v;
    return cfg;
  }
  if (auto v = parse_value("ps-")) {
    TrainConfig cfg = preset_config("ammnet");
    cfg.ps_min = cfg.ps_max = *v;
    return cfg;
  }
  std::ostringstream known;
  for (const std::string& n : ablate_preset_names()) known << ' ' << n;
  AMM_CHECK(false, ErrCode::kInvalidArgument,
            "unknown ablation preset '" << name << "'; known presets:" << known.str());
}

std::string render_curves_svg(const std::vector<CurvePoint>& curves) {
  AMM_CHECK(!curves.empty(), ErrCode::kInvalidArgument, "no curves to render");
  const int width = 640, height = 400, margin = 48;
  int max_epoch = 0;
  double max_y = 0.0;
  for (const CurvePoint& p : curves) {
    max_epoch = std::max(max_epoch, p.epoch);
    max_y = std::max(max_y, p.ssc_miou);
  }
  if (max_y <= 0.0) max_y = 1.0;
  max_y = std::ceil(max_y * 10.0) / 10.0;  // round the axis up to a tidy tick

  const auto px = [&](double epoch) {
    return margin + (width - 2 * margin) * (max_epoch > 0 ? epoch / max_epoch : 0.0);
  };
  const auto py = [&](double y) { return height - margin - (height - 2 * margin) * (y / max_y); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = max_y * tick / 4.0;
    svg << "<text x=\"" << margin - 6 << "\" y=\"" << py(y) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << format_double(y) << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" font-size=\"12\" text-anchor=\"middle\">epoch (0.." << max_epoch << ")</text>\n";
  svg << "<text x=\"14\" y=\"" << height / 2
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << height / 2
      << ")\">mean IoU</text>\n";

  const std::vector<std::pair<std::string, std::string>> palette = {
      {"train", "#1f77b4"}, {"val", "#d62728"}, {"test", "#2ca02c"}};
  int legend_y = margin;
  for (const auto& [split, color] : palette) {
    std::ostringstream points;
    bool any = false;
    for (const CurvePoint& p : curves) {
      if (p.split != split) continue;
      points << format_double(px(p.epoch)) << ',' << format_double(py(p.ssc_miou)) << ' ';
      any = true;
    }
    if (!any) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << points.str() << "\"/>\n";
    svg << "<text x=\"" << width - margin - 60 << "\" y=\"" << legend_y
        << "\" font-size=\"12\" fill=\"" << color << "\">" << split << "</text>\n";
    legend_y += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

int run_cli(int argc, char** argv) {
  CLI::App app{"additive and modulated multimodal scene completion toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed_value = 0;
  bool seed_given = false;
  std::string out_path, config_path, preset;
  std::string ckpt_path, data_path, kind, modality;
  bool svg = false;
  int cases = 20;
  double prob = 0.5;

  const auto add_common = [&](CLI::App* cmd, bool out_required) {
    cmd->add_option("--seed", seed_value, "Master random seed")->each([&](const std::string&) {
      seed_given = true;
    });
    auto* out_opt = cmd->add_option("--out", out_path, "Output directory");
    if (out_required) out_opt->required();
    cmd->add_option("--config", config_path, "JSON run configuration");
    return cmd;
  };

  CLI::App* c_gen = add_common(app.add_subcommand("gen-data", "Write synthetic scene bundles"),
                               true);
  CLI::App* c_train =
      add_common(app.add_subcommand("train", "Train a model and write curves"), true);
  c_train->add_option("--preset", preset, "Named configuration")
      ->check(CLI::IsMember({"baseline", "ammnet", "ammnet-noadv", "ammnet-nomod"}))
      ->excludes(c_train->get_option("--config"));
  c_train->add_flag("--svg", svg, "Also render the curves as an SVG chart");
  CLI::App* c_eval = add_common(app.add_subcommand("eval", "Evaluate a checkpoint"), true);
  c_eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  c_eval->add_option("--data", data_path, "Scene bundle directory")->required();
  CLI::App* c_grad =
      add_common(app.add_subcommand("gradcheck", "Verify gradients by finite differences"), true);
  c_grad->add_option("--cases", cases, "Number of random cases");
  CLI::App* c_pert =
      add_common(app.add_subcommand("perturb", "Preview a label perturbation"), true);
  c_pert->add_option("--kind", kind, "geo (erase) or sem (shuffle)")
      ->check(CLI::IsMember({"geo", "sem"}))
      ->required();
  c_pert->add_option("--p", prob, "Perturbation probability");
  CLI::App* c_probe =
      add_common(app.add_subcommand("probe", "Train a decoder on one frozen encoder"), true);
  c_probe->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  c_probe->add_option("--modality", modality, "rgb or tsdf")
      ->check(CLI::IsMember({"rgb", "tsdf"}))
      ->required();
  CLI::App* c_abl = add_common(app.add_subcommand("ablate", "Train one named ablation row"), true);
  c_abl->add_option("--preset", preset, "Ablation row name")->required();
  c_abl->add_flag("--svg", svg, "Also render the curves as an SVG chart");
  CLI::App* c_ver = app.add_subcommand("version", "Print the tool version");
  (void)c_gen;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const std::optional<std::uint64_t> seed =
        seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;
    if (c_ver->parsed()) {
      std::cout << kVersion << "\n";
      return 0;
    }
    if (c_gen->parsed()) return cmd_gen_data(resolve_config(config_path, "", seed), out_path);
    if (c_train->parsed())
      return cmd_train(resolve_config(config_path, preset, seed), out_path, svg, preset);
    if (c_eval->parsed()) return cmd_eval(ckpt_path, data_path, out_path);
    if (c_grad->parsed()) return cmd_gradcheck(seed ? *seed : 0, cases, out_path);
    if (c_pert->parsed())
      return cmd_perturb(resolve_config(config_path, "", seed), kind, prob, out_path);
    if (c_probe->parsed())
      return cmd_probe(resolve_config(config_path, "", seed), ckpt_path, modality, out_path);
    if (c_abl->parsed()) {
      TrainConfig cfg = ablate_config(preset);
      if (seed) cfg.seed = *seed;
      return cmd_train(cfg, out_path, svg, preset);
    }
    std::cerr << "error: no command dispatched\n";
    return 2;
  } catch (const AmmError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ammnet
