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
#include "trs/augment.hpp"

using namespace trs;

namespace {

std::pair<int, int> argmax_cell(const Grid<double>& g) {
  const auto it = std::max_element(g.data.begin(), g.data.end());
  const auto i = static_cast<int>(it - g.data.begin());
  return {i % g.width, i / g.width};
}

Pose one_joint(double x, double y) {
  Pose p(1);
  p[0] = {x, y, true};
  return p;
}

}  // namespace

TEST_CASE("sample_affine: identity, determinant and determinism") {
  AugmentConfig flat;
  flat.easy = {0.0, 1.0, 1.0};
  Rng rng(0);
  CHECK(sample_affine(rng, Strength::easy, flat, 64, 64) == AffineTransform::identity());

  const AugmentConfig cfg;
  for (int i = 0; i < 200; ++i) {
    const Strength s = i % 2 ? Strength::easy : Strength::hard;
    const AffineDraw d = sample_affine_draw(rng, s, cfg, 64, 64);
    CHECK(d.transform.det() == doctest::Approx(d.scale * d.scale).epsilon(1e-12));
  }
  Rng a(99), b(99);
  CHECK(sample_affine(a, Strength::hard, cfg, 64, 64) == sample_affine(b, Strength::hard, cfg, 64, 64));
}

TEST_CASE("sample_affine distributions stay in range and are centered") {
  const AugmentConfig cfg;
  for (Strength s : {Strength::easy, Strength::hard}) {
    const AugmentRange& r = cfg.range(s);
    Rng rng(5);
    double lo = 1e9, hi = -1e9, sum = 0, smin = 1e9, smax = -1e9;
    for (int i = 0; i < 10000; ++i) {
      const AffineDraw d = sample_affine_draw(rng, s, cfg, 64, 64);
      lo = std::min(lo, d.rotation_deg);
      hi = std::max(hi, d.rotation_deg);
      smin = std::min(smin, d.scale);
      smax = std::max(smax, d.scale);
      sum += d.rotation_deg;
    }
    CHECK(lo >= -r.max_rotation_deg);
    CHECK(hi <= r.max_rotation_deg);
    CHECK(smin >= r.min_scale);
    CHECK(smax <= r.max_scale);
    CHECK(std::abs(sum / 10000.0) <= 2.0);
  }
}

TEST_CASE("warp_image identity and translation") {
  Rng rng(2);
  const Image img = test::random_image(rng, 32, 32);
  CHECK(warp_image(img, AffineTransform::identity()) == img);

  Image delta(1, 32, 32);
  delta.at(0, 10, 10) = 1.0f;
  const Image moved = warp_image(delta, AffineTransform::translation(3, 0));
  CHECK(moved.at(0, 10, 13) == 1.0f);
  float total = 0;
  for (float v : moved.data) total += v;
  CHECK(total == 1.0f);

  AffineTransform singular{{1, 2, 0, 2, 4, 0}};
  CHECK_THROWS_AS(warp_image(img, singular), ConfigError);
}

TEST_CASE("four quarter turns reproduce the image") {
  Image img(1, 64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double r = std::hypot(x - 31.5, y - 31.5);
      img.at(0, y, x) = r < 28 ? static_cast<float>(0.5 + 0.4 * std::sin(x * 0.2) * std::cos(y * 0.15)) : 0.0f;
    }
  const AffineTransform quarter = AffineTransform::rotation_scale(90.0, 1.0, 31.5, 31.5);
  Image out = img;
  for (int i = 0; i < 4; ++i) out = warp_image(out, quarter);
  float worst = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) worst = std::max(worst, std::abs(out.data[i] - img.data[i]));
  CHECK(worst <= 0.02f);
}

TEST_CASE("map_easy_to_hard: identity composite and one-cell shift") {
  Rng rng(4);
  const AugmentConfig cfg;
  for (int t = 0; t < 20; ++t) {
    const AffineTransform ta = sample_affine(rng, Strength::hard, cfg, 64, 64);
    const HeatmapStack<double> s = encode<double>(test::random_pose(rng, 3, 64, 64), 2.0, 32, 32, 2);
    const HeatmapStack<double> m = map_easy_to_hard(s, ta, ta);
    for (std::size_t i = 0; i < s.values.data.size(); ++i) CHECK(std::abs(m.values.data[i] - s.values.data[i]) <= 1e-6);
  }
  const HeatmapStack<double> s = encode<double>(one_joint(20, 24), 2.0, 32, 32, 2);
  const HeatmapStack<double> m =
      map_easy_to_hard(s, AffineTransform::identity(), AffineTransform::translation(2.0, 0.0));
  CHECK(argmax_cell(s.values) == std::pair{10, 12});
  CHECK(argmax_cell(m.values) == std::pair{11, 12});
}

TEST_CASE("map_easy_to_hard round trip keeps the peak within one cell") {
  Rng rng(8);
  const AugmentConfig cfg;
  int tested = 0;
  while (tested < 100) {
    const AffineTransform te = sample_affine(rng, Strength::easy, cfg, 64, 64);
    const AffineTransform th = sample_affine(rng, Strength::hard, cfg, 64, 64);
    const Pose p = one_joint(rng.uniform(20, 44), rng.uniform(20, 44));
    // Keep both mapped peaks well inside the grid so zero fill cannot move them.
    const auto [hx, hy] = te.inverse().then(th).apply(p[0].x, p[0].y);
    if (hx < 8 || hy < 8 || hx > 56 || hy > 56) continue;
    const HeatmapStack<double> s = encode<double>(p, 2.0, 32, 32, 2);
    const HeatmapStack<double> back = map_easy_to_hard(map_easy_to_hard(s, te, th), th, te);
    const auto [u0, v0] = argmax_cell(s.values);
    const auto [u1, v1] = argmax_cell(back.values);
    CHECK(std::max(std::abs(u1 - u0), std::abs(v1 - v0)) <= 1);
    ++tested;
  }
}

TEST_CASE("map_easy_to_hard is linear in the stack") {
  Rng rng(12);
  const AugmentConfig cfg;
  for (int t = 0; t < 30; ++t) {
    const AffineTransform te = sample_affine(rng, Strength::easy, cfg, 64, 64);
    const AffineTransform th = sample_affine(rng, Strength::hard, cfg, 64, 64);
    const HeatmapStack<double> s1 = encode<double>(test::random_pose(rng, 3, 64, 64), 2.0, 32, 32, 2);
    const HeatmapStack<double> s2 = encode<double>(test::random_pose(rng, 3, 64, 64), 1.5, 32, 32, 2);
    const double a = rng.uniform(0, 0.6), b = rng.uniform(0, 0.4);
    HeatmapStack<double> mix = s1;
    for (std::size_t i = 0; i < mix.values.data.size(); ++i) mix.values.data[i] = a * s1.values.data[i] + b * s2.values.data[i];
    const HeatmapStack<double> lhs = map_easy_to_hard(mix, te, th);
    const HeatmapStack<double> m1 = map_easy_to_hard(s1, te, th);
    const HeatmapStack<double> m2 = map_easy_to_hard(s2, te, th);
    double worst = 0;
    for (std::size_t i = 0; i < lhs.values.data.size(); ++i)
      worst = std::max(worst, std::abs(lhs.values.data[i] - (a * m1.values.data[i] + b * m2.values.data[i])));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("transform_pose drops keypoints leaving the frame") {
  Pose p(2);
  p[0] = {10, 10, true};
  p[1] = {60, 10, true};
  const Pose q = transform_pose(p, AffineTransform::translation(5, 0), 64, 64);
  CHECK(q[0].visible);
  CHECK(q[0].x == 15.0);
  CHECK_FALSE(q[1].visible);
}

TEST_CASE("keypoint_mix k=1 and k=0 are the identity") {
  Rng rng(1);
  const Image img = test::random_image(rng, 64, 64);
  const Pose p = test::random_pose(rng, 7, 64, 64);
  Rng mix_rng(3);
  CHECK(keypoint_mix(img, p, 1, 5, mix_rng).image == img);
  CHECK(keypoint_mix(img, p, 0, 5, mix_rng).image == img);
}

TEST_CASE("keypoint_mix averages two constant patches") {
  Image img(1, 64, 64, 0.9f);
  for (int y = 7; y <= 13; ++y)
    for (int x = 7; x <= 13; ++x) img.at(0, y, x) = 0.2f;
  for (int y = 37; y <= 43; ++y)
    for (int x = 47; x <= 53; ++x) img.at(0, y, x) = 0.6f;
  Pose p(2);
  p[0] = {10, 10, true};
  p[1] = {50, 40, true};
  Rng rng(0);
  const KeypointMixResult r = keypoint_mix(img, p, 2, 3, rng);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool in_a = x >= 7 && x <= 13 && y >= 7 && y <= 13;
      const bool in_b = x >= 47 && x <= 53 && y >= 37 && y <= 43;
      if (in_a || in_b) {
        CHECK(r.image.at(0, y, x) == 0.4f);
      } else {
        CHECK(r.image.at(0, y, x) == img.at(0, y, x));
      }
    }
}

TEST_CASE("keypoint_mix k=5 writes identical regions and conserves the rest") {
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 20 && seed < 500; ++seed) {
    const Sample s = generate_scene(seed, cfg);
    Rng rng(seed + 1);
    const int half = 3;
    const KeypointMixResult r = keypoint_mix(s.image, *s.pose, 5, half, rng);
    REQUIRE(r.joints.size() == 5);
    CHECK(std::is_sorted(r.joints.begin(), r.joints.end()));
    bool disjoint = true;
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = a + 1; b < 5; ++b) {
        if (std::abs(r.centers[a].first - r.centers[b].first) <= 2 * half &&
            std::abs(r.centers[a].second - r.centers[b].second) <= 2 * half)
          disjoint = false;
      }
    std::vector<char> written(s.image.data.size(), 0);
    for (const auto& [cx, cy] : r.centers)
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) written[static_cast<std::size_t>((cy + dy) * 64 + cx + dx)] = 1;
    for (std::size_t i = 0; i < written.size(); ++i) {
      if (!written[i]) CHECK(r.image.data[i] == s.image.data[i]);
    }
    if (!disjoint) continue;
    const auto [x0, y0] = r.centers[0];
    for (std::size_t k = 1; k < 5; ++k) {
      const auto [xk, yk] = r.centers[k];
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) CHECK(r.image.at(0, yk + dy, xk + dx) == r.image.at(0, y0 + dy, x0 + dx));
    }
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("overlapping patches: the last selected joint wins") {
  Rng img_rng(6);
  const Image img = test::random_image(img_rng, 32, 32);
  Pose p(3);
  p[0] = {10, 10, true};
  p[1] = {12, 11, true};
  p[2] = {25, 25, true};
  Rng rng(0);
  const KeypointMixResult r = keypoint_mix(img, p, 3, 2, rng);
  // Pixel (12, 10) lies in the patches of joints 0 and 1; joint 1 is written last.
  const int ox = 12 - 12 + 2, oy = 10 - 11 + 2;
  double mean = 0;
  for (const auto& [cx, cy] : r.centers) mean += img.at(0, cy - 2 + oy, cx - 2 + ox);
  CHECK(r.image.at(0, 10, 12) == static_cast<float>(mean / 3.0));
  CHECK(r.joints == std::vector<int>{0, 1, 2});
}

TEST_CASE("keypoint_mix clamps patch centers and validates k") {
  Rng rng(0);
  const Image img = test::random_image(rng, 32, 32);
  Pose p(2);
  p[0] = {0.2, 31.0, true};
  p[1] = {16, 16, false};
  const KeypointMixResult r = keypoint_mix(img, p, 1, 4, rng);
  CHECK(r.centers.front() == std::pair{4, 27});
  CHECK_THROWS_AS(keypoint_mix(img, p, 2, 4, rng), InsufficientKeypoints);
  CHECK(keypoint_mix_clamped(img, p, 5, 4, rng).joints.size() == 1);
  CHECK_THROWS_AS(keypoint_mix(img, p, 1, 0, rng), ConfigError);
}
