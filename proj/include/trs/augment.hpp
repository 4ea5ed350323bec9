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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "trs/datagen.hpp"
#include "trs/grid.hpp"
#include "trs/heatmap.hpp"
#include "trs/rng.hpp"

namespace trs {

/// 2x3 matrix [a b tx; c d ty] mapping source (x, y, 1) to destination pixels.
struct AffineTransform {
  std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double dx, double dy) { return {{1.0, 0.0, dx, 0.0, 1.0, dy}}; }
  static AffineTransform scaling(double sx, double sy) { return {{sx, 0.0, 0.0, 0.0, sy, 0.0}}; }
  /// Rotation by `degrees` and isotropic `scale` about (cx, cy).
  static AffineTransform rotation_scale(double degrees, double scale, double cx, double cy);

  std::pair<double, double> apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }
  double det() const { return m[0] * m[4] - m[1] * m[3]; }
  bool invertible() const { return std::abs(det()) > 1e-8; }
  /// Throws ConfigError when |det| <= 1e-8.
  AffineTransform inverse() const;
  /// The transform applying *this first, then `next`.
  AffineTransform then(const AffineTransform& next) const;
  /// The same map expressed on a grid whose cell u sits at pixel u * stride.
  AffineTransform in_cells(int stride) const;

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

enum class Strength { easy, hard };

struct AugmentRange {
  double max_rotation_deg = 30.0;
  double min_scale = 0.85;
  double max_scale = 1.15;

  friend bool operator==(const AugmentRange&, const AugmentRange&) = default;
};

struct AugmentConfig {
  AugmentRange easy{30.0, 0.85, 1.15};
  AugmentRange hard{45.0, 0.65, 1.35};

  const AugmentRange& range(Strength s) const { return s == Strength::easy ? easy : hard; }
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

struct AffineDraw {
  AffineTransform transform;
  double rotation_deg = 0.0;
  double scale = 1.0;
};

/// Rotation about the image center, uniform in +-max_rotation_deg, and
/// isotropic scale uniform in [min_scale, max_scale]. Consumes two draws.
AffineDraw sample_affine_draw(Rng& rng, Strength strength, const AugmentConfig& config, int width, int height);

inline AffineTransform sample_affine(Rng& rng, Strength strength, const AugmentConfig& config, int width,
                                     int height) {
  return sample_affine_draw(rng, strength, config, width, height).transform;
}

/// Inverse-warps every channel with bilinear sampling; out-of-bounds source
/// reads as zero. Output has the input's shape.
template <typename T>
Grid<T> warp_grid(const Grid<T>& input, const AffineTransform& transform) {
  const AffineTransform inv = transform.inverse();
  Grid<T> out(input.channels, input.height, input.width);
  const int w = input.width;
  const int h = input.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [sx, sy] = inv.apply(x, y);
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      if (fx < -1.0 || fy < -1.0 || fx > w || fy > h) continue;
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const double w00 = (1.0 - ax) * (1.0 - ay);
      const double w01 = ax * (1.0 - ay);
      const double w10 = (1.0 - ax) * ay;
      const double w11 = ax * ay;
      const bool in_x0 = x0 >= 0 && x0 < w;
      const bool in_x1 = x0 + 1 >= 0 && x0 + 1 < w;
      const bool in_y0 = y0 >= 0 && y0 < h;
      const bool in_y1 = y0 + 1 >= 0 && y0 + 1 < h;
      for (int c = 0; c < input.channels; ++c) {
        double v = 0.0;
        if (in_y0 && in_x0) v += w00 * static_cast<double>(input.at(c, y0, x0));
        if (in_y0 && in_x1) v += w01 * static_cast<double>(input.at(c, y0, x0 + 1));
        if (in_y1 && in_x0) v += w10 * static_cast<double>(input.at(c, y0 + 1, x0));
        if (in_y1 && in_x1) v += w11 * static_cast<double>(input.at(c, y0 + 1, x0 + 1));
        out.at(c, y, x) = static_cast<T>(v);
      }
    }
  }
  return out;
}

inline Image warp_image(const Image& image, const AffineTransform& transform) {
  return warp_grid(image, transform);
}

/// Carries a heatmap predicted on the easy view into the hard view's frame:
/// every channel is warped by t_hard o t_easy^-1 in cell coordinates, then
/// clipped to [0, 1].
template <typename T>
HeatmapStack<T> map_easy_to_hard(const HeatmapStack<T>& stack, const AffineTransform& t_easy,
                                 const AffineTransform& t_hard) {
  const AffineTransform composite = t_easy.inverse().then(t_hard);
  HeatmapStack<T> out;
  out.stride = stack.stride;
  out.values = warp_grid(stack.values, composite.in_cells(stack.stride));
  for (auto& v : out.values.data) v = std::clamp(v, T(0), T(1));
  return out;
}

/// Applies `transform` to every visible keypoint; keypoints leaving the
/// width x height frame become invisible.
Pose transform_pose(const Pose& pose, const AffineTransform& transform, int width, int height);

struct KeypointMixResult {
  Image image;
  /// Selected joints in write order (ascending joint index).
  std::vector<int> joints;
  /// Patch centers (x, y) after clamping, parallel to `joints`.
  std::vector<std::pair<int, int>> centers;
  int patch_half = 0;
};

/// Samples k distinct visible keypoints, averages the (2*patch_half+1)^2
/// patches around them and writes the average back over each location in
/// ascending joint order. Patch centers are clamped so patches lie inside the
/// image. Throws InsufficientKeypoints if fewer than k keypoints are visible.
KeypointMixResult keypoint_mix(const Image& image, const Pose& predicted, int k, int patch_half, Rng& rng);

/// keypoint_mix with k reduced to the visible count when necessary.
KeypointMixResult keypoint_mix_clamped(const Image& image, const Pose& predicted, int k, int patch_half, Rng& rng);

}  // namespace trs
