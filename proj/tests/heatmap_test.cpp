// Copyright 2026 The trspose Authors.
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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "trs/heatmap.hpp"

using namespace trs;

namespace {

Pose one_joint(double x, double y, bool visible = true) {
  Pose p(1);
  p[0] = {x, y, visible};
  return p;
}

}  // namespace

TEST_CASE("encode places a unit peak on a cell-centered keypoint") {
  const HeatmapStack<double> s = encode<double>(one_joint(20, 12), 2.0, 32, 32, 2);
  CHECK(s.values.at(0, 6, 10) == 1.0);
  CHECK(*std::max_element(s.values.data.begin(), s.values.data.end()) == 1.0);
  for (double v : s.values.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("encode matches the Gaussian formula") {
  const HeatmapStack<double> s = encode<double>(one_joint(10, 10), 2.0, 32, 32, 1);
  CHECK(s.values.at(0, 14, 10) == doctest::Approx(std::exp(-16.0 / 8.0)).epsilon(1e-15));
  CHECK(s.values.at(0, 14, 10) == doctest::Approx(0.1353).epsilon(1e-4));
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const double x = rng.uniform(0, 63), y = rng.uniform(0, 63), sigma = rng.uniform(0.5, 4.0);
    const HeatmapStack<double> h = encode<double>(one_joint(x, y), sigma, 16, 16, 4);
    const int u = static_cast<int>(rng.below(16)), v = static_cast<int>(rng.below(16));
    const double dx = u - x / 4, dy = v - y / 4;
    CHECK(h.values.at(0, v, u) == doctest::Approx(std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))));
  }
}

TEST_CASE("invisible keypoints encode to zero channels") {
  Pose p(2);
  p[0] = {5, 5, true};
  p[1] = {7, 7, false};
  const HeatmapStack<float> s = encode<float>(p, 2.0, 16, 16, 2);
  double sum = 0;
  for (float v : s.values.plane(1)) sum += v;
  CHECK(sum == 0.0);
  CHECK_THROWS_AS(encode<float>(p, 0.0, 16, 16, 2), ConfigError);
}

TEST_CASE("visible channels have exactly one global maximum") {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const HeatmapStack<double> h = encode<double>(one_joint(rng.uniform(0, 63), rng.uniform(0, 63)), 2.0, 32, 32, 2);
    const double m = *std::max_element(h.values.data.begin(), h.values.data.end());
    CHECK(std::count(h.values.data.begin(), h.values.data.end(), m) == 1);
  }
}

TEST_CASE("decode inverts encode on cell centers") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    Pose p(7);
    for (int j = 0; j < 7; ++j) p[j] = {2.0 * static_cast<double>(rng.below(32)), 2.0 * static_cast<double>(rng.below(32)), true};
    CHECK(decode(encode<float>(p, 2.0, 32, 32, 2)) == p);
  }
}

TEST_CASE("decode tie-break, offset and confidence floor") {
  HeatmapStack<float> s;
  s.stride = 2;
  s.values = Grid<float>(1, 8, 8, 0.5f);
  Pose p = decode(s);
  CHECK(p[0].x == 0.0);
  CHECK(p[0].y == 0.0);
  CHECK(p[0].visible);

  s.values = Grid<float>(1, 8, 8, 0.0f);
  s.values.at(0, 3, 4) = 0.9f;
  s.values.at(0, 3, 5) = 0.5f;
  s.values.at(0, 3, 3) = 0.2f;
  s.values.at(0, 2, 4) = 0.3f;
  p = decode(s);
  CHECK(p[0].x == doctest::Approx(2 * 4.25));
  CHECK(p[0].y == doctest::Approx(2 * 2.75));

  s.values = Grid<float>(1, 8, 8, 0.0f);
  s.values.at(0, 1, 1) = 0.01f;
  CHECK_FALSE(decode(s)[0].visible);
  CHECK(decode(s, 0.005)[0].visible);
}

TEST_CASE("pck reference cases") {
  const PckReference ref = PckReference::fixed(10.0);
  Pose gt(4);
  for (int j = 0; j < 4; ++j) gt[j] = {10.0 * j, 5.0, true};
  std::vector<Pose> preds{gt};
  std::vector<Pose> truth{gt};
  CHECK(pck(preds, truth, 0.2, ref).total == 1.0);

  Pose far = gt;
  for (int j = 0; j < 4; ++j) far[j].x += 10 * 0.2 * 10.0;
  preds = {far};
  CHECK(pck(preds, truth, 0.2, ref).total == 0.0);

  Pose half = gt;
  half[1].y += 2.5;
  half[3].x -= 2.5;
  preds = {half};
  const PckReport r = pck(preds, truth, 0.2, ref);
  CHECK(r.total == 0.5);
  CHECK(r.per_joint == std::vector<double>{1.0, 0.0, 1.0, 0.0});
  CHECK(r.threshold == 0.2);

  CHECK_THROWS_AS(pck(std::span<const Pose>{}, std::span<const Pose>{}, 0.2, ref), ConfigError);
}

TEST_CASE("pck excludes invisible ground truth and rejects invisible predictions") {
  const PckReference ref = PckReference::fixed(10.0);
  Pose gt(2);
  gt[0] = {1, 1, true};
  gt[1] = {5, 5, false};
  Pose pred(2);
  pred[0] = {1, 1, true};
  pred[1] = {50, 50, true};
  std::vector<Pose> p{pred}, t{gt};
  const PckReport r = pck(p, t, 0.5, ref);
  CHECK(r.total == 1.0);
  CHECK(r.visible_per_joint == std::vector<int>{1, 0});
  pred[0].visible = false;
  p = {pred};
  CHECK(pck(p, t, 0.5, ref).total == 0.0);
}

TEST_CASE("head-size reference uses the head to shoulder midpoint distance") {
  Pose gt(3);
  gt[0] = {10, 0, true};
  gt[1] = {4, 8, true};
  gt[2] = {16, 8, true};
  CHECK(PckReference::head_size(0, 1, 2).measure(gt) == doctest::Approx(8.0));
  Pose pred = gt;
  pred[1].x += 1.5;  // 1.5 <= 0.2 * 8
  pred[2].x += 1.7;  // 1.7 > 1.6
  std::vector<Pose> p{pred}, t{gt};
  CHECK(pck(p, t, 0.2, PckReference::head_size(0, 1, 2)).per_joint == std::vector<double>{1.0, 1.0, 0.0});
}

TEST_CASE("pck properties: permutation invariance, monotone threshold, weighted total") {
  Rng rng(11);
  const PckReference ref = PckReference::head_size(0, 1, 2);
  std::vector<Pose> preds, truth;
  for (int i = 0; i < 40; ++i) {
    Pose gt = test::random_pose(rng, 7, 64, 64);
    if (i % 3 == 0) gt[5].visible = false;
    Pose pr = gt;
    for (int j = 0; j < 7; ++j) {
      pr[j].x += rng.uniform(-6, 6);
      pr[j].y += rng.uniform(-6, 6);
    }
    truth.push_back(gt);
    preds.push_back(pr);
  }
  const PckReport base = pck(preds, truth, 0.3, ref);
  std::vector<Pose> sp = preds, st = truth;
  for (std::size_t i = sp.size() - 1; i > 0; --i) {
    const std::size_t k = rng.below(i + 1);
    std::swap(sp[i], sp[k]);
    std::swap(st[i], st[k]);
  }
  CHECK(pck(sp, st, 0.3, ref).total == base.total);

  double prev = 2.0;
  for (double thr = 1.0; thr > 0.0; thr -= 0.05) {
    const double v = pck(preds, truth, thr, ref).total;
    CHECK(v <= prev);
    prev = v;
  }

  double num = 0, den = 0;
  for (std::size_t j = 0; j < base.per_joint.size(); ++j) {
    num += base.per_joint[j] * base.visible_per_joint[j];
    den += base.visible_per_joint[j];
  }
  CHECK(base.total == doctest::Approx(num / den).epsilon(1e-12));
}
