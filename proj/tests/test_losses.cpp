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
// Loss-side oracles: the smoothed cross entropy against a direct per-site
// evaluation, the combined 3D + 2D objective against its parts, and the
// adversarial batch objectives against scalar arithmetic and central
// differences.

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ammnet/losses.hpp"
#include "ammnet/nn.hpp"
#include "ammnet/tensor.hpp"
#include "ammnet/voxel_data.hpp"
#include "test_support.hpp"

using namespace ammnet;
using ammtest::rel_diff;

namespace {

// Direct evaluation of the smoothed cross entropy at one site: softmax by
// hand, target distribution by hand, then the negative dot of target and
// log-probabilities.
double site_loss(const Tensor& logits, std::int64_t site, int label, double eps) {
  const int ch = logits.dim(0);
  const std::int64_t n = logits.size() / ch;
  double zmax = -1e300;
  for (int c = 0; c < ch; ++c) zmax = std::max(zmax, logits[c * n + site]);
  double z = 0.0;
  for (int c = 0; c < ch; ++c) z += std::exp(logits[c * n + site] - zmax);
  double loss = 0.0;
  for (int c = 0; c < ch; ++c) {
    const double logp = logits[c * n + site] - zmax - std::log(z);
    const double t = c == label ? 1.0 - eps : eps / (ch - 1);
    loss -= t * logp;
  }
  return loss;
}

Tensor random_logits(std::vector<int> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  fill_uniform(t, rng, -3.0, 3.0);
  return t;
}

}  // namespace

TEST_CASE("smoothed cross entropy matches the per-site oracle") {
  std::mt19937_64 rng(5);
  Tensor logits = random_logits({4, 3, 2, 2}, rng);
  const std::int64_t n = logits.size() / 4;
  std::vector<std::uint8_t> target(static_cast<std::size_t>(n));
  for (auto& t : target) t = static_cast<std::uint8_t>(rng() % 4);

  for (double eps : {0.0, 0.1, 0.3}) {
    double want = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      want += site_loss(logits, i, target[static_cast<std::size_t>(i)], eps);
    want /= static_cast<double>(n);
    CHECK(rel_diff(smooth_ce(logits, target, eps), want) < 1e-12);
  }
}

TEST_CASE("zero smoothing reduces to plain cross entropy") {
  std::mt19937_64 rng(6);
  Tensor logits = random_logits({5, 2, 2, 3}, rng);
  const std::int64_t n = logits.size() / 5;
  std::vector<std::uint8_t> target(static_cast<std::size_t>(n));
  for (auto& t : target) t = static_cast<std::uint8_t>(rng() % 5);

  double ce = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double zmax = -1e300;
    for (int c = 0; c < 5; ++c) zmax = std::max(zmax, logits[c * n + i]);
    double z = 0.0;
    for (int c = 0; c < 5; ++c) z += std::exp(logits[c * n + i] - zmax);
    ce -= logits[target[static_cast<std::size_t>(i)] * n + i] - zmax - std::log(z);
  }
  ce /= static_cast<double>(n);
  CHECK(rel_diff(smooth_ce(logits, target, 0.0), ce) < 1e-12);
}

TEST_CASE("uniform scores cost the log of the class count at any smoothing") {
  Tensor logits({6, 2, 2, 2});
  logits.fill(0.7);  // any constant: the softmax is uniform
  std::vector<std::uint8_t> target(8, 3);
  for (double eps : {0.0, 0.1, 0.5}) {
    CHECK(rel_diff(smooth_ce(logits, target, eps), std::log(6.0)) < 1e-12);
  }
}

TEST_CASE("ignored and masked-out sites do not contribute") {
  std::mt19937_64 rng(7);
  Tensor logits = random_logits({3, 1, 2, 3}, rng);
  const std::int64_t n = 6;
  std::vector<std::uint8_t> target{0, 1, 2, kIgnoreLabel, 1, 0};
  std::vector<std::uint8_t> include{1, 1, 0, 1, 1, 1};

  const SmoothCeGrad g = smooth_ce_grad(logits, target, 0.1, &include);
  CHECK(g.counted == 4);  // six sites minus one ignored minus one masked

  double want = 0.0;
  for (std::int64_t i : {0, 1, 4, 5})
    want += site_loss(logits, i, target[static_cast<std::size_t>(i)], 0.1);
  CHECK(rel_diff(g.loss, want / 4.0) < 1e-12);

  // Excluded sites keep an exactly zero gradient.
  for (int c = 0; c < 3; ++c) {
    CHECK(g.g_logits[c * n + 2] == 0.0);
    CHECK(g.g_logits[c * n + 3] == 0.0);
  }
}

TEST_CASE("smoothed cross entropy gradient is (p - q) / counted and passes FD") {
  std::mt19937_64 rng(8);
  Tensor logits = random_logits({4, 2, 2, 2}, rng);
  const std::int64_t n = logits.size() / 4;
  std::vector<std::uint8_t> target(static_cast<std::size_t>(n));
  for (auto& t : target) t = static_cast<std::uint8_t>(rng() % 4);
  target[3] = kIgnoreLabel;
  const double eps = 0.1;

  const SmoothCeGrad g = smooth_ce_grad(logits, target, eps);

  Tensor probs = softmax_channels(logits);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t lab = target[static_cast<std::size_t>(i)];
    for (int c = 0; c < 4; ++c) {
      double want = 0.0;
      if (lab != kIgnoreLabel) {
        const double q = c == lab ? 1.0 - eps : eps / 3.0;
        want = (probs[c * n + i] - q) / static_cast<double>(g.counted);
      }
      CHECK(std::abs(g.g_logits[c * n + i] - want) < 1e-13);
    }
  }

  const auto loss = [&]() { return smooth_ce(logits, target, eps); };
  std::mt19937_64 probe(3);
  CHECK(max_rel_err_fd(loss, logits.data(), g.g_logits.data(), logits.size(), 16, probe) < 1e-7);
}

TEST_CASE("label image backprojection reads the voxel under each pixel") {
  GridSpec spec;
  spec.dims = {2, 2, 2};
  spec.voxel_size = 0.5;
  LabelGrid gt{spec, std::vector<std::uint8_t>(8, 0)};
  gt.labels[static_cast<std::size_t>(spec.linear(0, 1, 0))] = 4;
  gt.labels[static_cast<std::size_t>(spec.linear(1, 0, 1))] = 7;

  ProjectionMap map;
  map.width = 2;
  map.height = 2;
  map.spec = spec;
  map.voxel_of_pixel = {spec.linear(0, 1, 0), -1, spec.linear(1, 0, 1), spec.linear(0, 0, 0)};

  const LabelImage img = backproject_labels_2d(gt, map);
  CHECK(img.at(0, 0) == 4);
  CHECK(img.at(1, 0) == kIgnoreLabel);  // no surface under this pixel
  CHECK(img.at(0, 1) == 7);
  CHECK(img.at(1, 1) == 0);
}

TEST_CASE("both backprojection overloads agree on a generated scene") {
  const SceneGenConfig cfg = default_scene_config();
  const SceneSample scene = gen_synthetic_scene(cfg, 42, 0);
  const LabelImage via_map = backproject_labels_2d(scene.labels, scene.map);
  const LabelImage direct =
      backproject_labels_2d(scene.labels, scene.depth, cfg.cam, cfg.grid);
  REQUIRE(via_map.values.size() == direct.values.size());
  for (std::size_t i = 0; i < via_map.values.size(); ++i) {
    CHECK(via_map.values[i] == direct.values[i]);
  }
}

TEST_CASE("combined objective adds the weighted 2D term") {
  std::mt19937_64 rng(9);
  GridSpec spec;
  spec.dims = {4, 3, 4};
  spec.voxel_size = 0.1;
  Tensor logits3d = random_logits({3, 4, 3, 4}, rng);
  LabelGrid gt{spec, std::vector<std::uint8_t>(48)};
  for (auto& l : gt.labels) l = static_cast<std::uint8_t>(rng() % 3);

  Tensor logits2d = random_logits({3, 2, 2}, rng);
  LabelImage gt2d;
  gt2d.width = 8;
  gt2d.height = 8;
  gt2d.values.assign(64, 0);
  for (auto& v : gt2d.values) v = static_cast<std::uint8_t>(rng() % 3);

  const double lambda = 0.25, eps = 0.1;
  const SscLoss full = ssc_loss_grad(logits3d, gt, logits2d, gt2d, lambda, eps);

  // The 3D part alone.
  CHECK(rel_diff(full.loss3d, smooth_ce(logits3d, gt.labels, eps)) < 1e-12);

  // The 2D part evaluated directly: one representative pixel per logits
  // cell, top-left of each block.
  std::vector<std::uint8_t> sub(4);
  sub[0] = gt2d.at(0, 0);
  sub[1] = gt2d.at(4, 0);
  sub[2] = gt2d.at(0, 4);
  sub[3] = gt2d.at(4, 4);
  CHECK(rel_diff(full.loss2d, smooth_ce(logits2d, sub, eps)) < 1e-12);
  CHECK(rel_diff(full.total, full.loss3d + lambda * full.loss2d) < 1e-13);

  // The exact weight shows up in the totals across two different lambdas.
  const SscLoss half = ssc_loss_grad(logits3d, gt, logits2d, gt2d, 0.5, eps);
  CHECK(rel_diff(half.total - half.loss3d, 2.0 * (full.total - full.loss3d)) < 1e-12);

  // The 2D gradient carries the lambda factor; the 3D gradient does not.
  const SmoothCeGrad bare2d = smooth_ce_grad(logits2d, sub, eps);
  for (std::int64_t i = 0; i < full.g_logits2d.size(); ++i) {
    CHECK(rel_diff(full.g_logits2d[i], lambda * bare2d.g_logits[i], 1e-15) < 1e-12);
  }

  // Zero lambda skips the 2D term entirely.
  const SscLoss off = ssc_loss_grad(logits3d, gt, logits2d, gt2d, 0.0, eps);
  CHECK(off.loss2d == 0.0);
  CHECK(off.g_logits2d.size() == 0);
  CHECK(rel_diff(off.total, off.loss3d) < 1e-15);
}

TEST_CASE("score clamp touches only the extremes") {
  CHECK(clamp_score(0.5) == 0.5);
  CHECK(clamp_score(1e-4) == 1e-4);
  CHECK(clamp_score(0.0) == 1e-7);
  CHECK(clamp_score(-3.0) == 1e-7);
  CHECK(clamp_score(1.0) == 1.0 - 1e-7);
  CHECK(clamp_score(7.0) == 1.0 - 1e-7);
}

TEST_CASE("indifferent scores give the closed-form adversarial losses") {
  const std::vector<double> half(4, 0.5);
  const AdvLossValues v = adv_losses(half, half, half, half);
  CHECK(rel_diff(v.loss_d, 4.0 * std::log(2.0)) < 1e-12);
  CHECK(rel_diff(v.loss_g_adv, std::log(2.0)) < 1e-12);

  // The literal generator objective at 0.5 is log(1/2).
  const AdvLossValues lit = adv_losses(half, half, half, half, true);
  CHECK(rel_diff(lit.loss_g_adv, -std::log(2.0)) < 1e-12);
  CHECK(rel_diff(lit.loss_d, v.loss_d) < 1e-15);
}

TEST_CASE("batch adversarial losses match scalar arithmetic on random scores") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + rng() % 5;
    std::vector<double> dr(b), dg(b), dgeo(b), dsem(b);
    for (std::size_t i = 0; i < b; ++i) {
      dr[i] = u(rng);
      dg[i] = u(rng);
      dgeo[i] = u(rng);
      dsem[i] = u(rng);
    }
    double want_d = 0.0, want_g = 0.0, want_g_lit = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      want_d -= std::log(dr[i]) + std::log(1.0 - dg[i]) + std::log(1.0 - dgeo[i]) +
                std::log(1.0 - dsem[i]);
      want_g -= std::log(dg[i]);
      want_g_lit += std::log(1.0 - dg[i]);
    }
    want_d /= static_cast<double>(b);
    want_g /= static_cast<double>(b);
    want_g_lit /= static_cast<double>(b);

    const AdvLossValues v = adv_losses(dr, dg, dgeo, dsem);
    CHECK(rel_diff(v.loss_d, want_d) < 1e-9);
    CHECK(rel_diff(v.loss_g_adv, want_g) < 1e-9);
    const AdvLossValues lit = adv_losses(dr, dg, dgeo, dsem, true);
    CHECK(rel_diff(lit.loss_g_adv, want_g_lit, 1e-9) < 1e-9);
  }
}

TEST_CASE("logit gradients of the adversarial objectives match finite differences") {
  // Each objective is a function of the logit through p = sigmoid(l); the
  // published gradients must agree with central differences on that scalar
  // composition.
  const int B = 3;
  const double h = 1e-6;
  for (double l : {-2.0, -0.5, 0.0, 0.8, 2.5}) {
    const double p = sigmoid(l);

    const auto real_term = [&](double lv) { return -std::log(sigmoid(lv)) / B; };
    const auto fake_term = [&](double lv) { return -std::log(1.0 - sigmoid(lv)) / B; };
    const auto gen_ns = [&](double lv) { return -std::log(sigmoid(lv)) / B; };
    const auto gen_lit = [&](double lv) { return std::log(1.0 - sigmoid(lv)) / B; };

    const double fd_real = (real_term(l + h) - real_term(l - h)) / (2.0 * h);
    const double fd_fake = (fake_term(l + h) - fake_term(l - h)) / (2.0 * h);
    const double fd_gen = (gen_ns(l + h) - gen_ns(l - h)) / (2.0 * h);
    const double fd_lit = (gen_lit(l + h) - gen_lit(l - h)) / (2.0 * h);

    CHECK(rel_diff(adv_d_logit_grad(p, true, B), fd_real, 1e-9) < 1e-7);
    CHECK(rel_diff(adv_d_logit_grad(p, false, B), fd_fake, 1e-9) < 1e-7);
    CHECK(rel_diff(adv_g_logit_grad(p, false, B), fd_gen, 1e-9) < 1e-7);
    CHECK(rel_diff(adv_g_logit_grad(p, true, B), fd_lit, 1e-9) < 1e-7);
  }
}

TEST_CASE("losses reject degenerate inputs") {
  Tensor logits({3, 2, 2, 2});
  std::vector<std::uint8_t> all_ignored(8, kIgnoreLabel);
  CHECK_THROWS_AS(smooth_ce(logits, all_ignored, 0.1), AmmError);

  std::vector<std::uint8_t> bad_label(8, 7);  // out of range for 3 channels
  CHECK_THROWS_AS(smooth_ce(logits, bad_label, 0.1), AmmError);

  std::vector<std::uint8_t> ok(8, 1);
  CHECK_THROWS_AS(smooth_ce(logits, ok, 1.0), AmmError);
  CHECK_THROWS_AS(smooth_ce(logits, ok, -0.1), AmmError);

  CHECK_THROWS_AS(adv_losses({}, {}, {}, {}), AmmError);
  CHECK_THROWS_AS(adv_losses({0.5}, {0.5, 0.5}, {0.5}, {0.5}), AmmError);
}
