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

#include <cmath>
#include <span>
#include <vector>

#include "trs/datagen.hpp"
#include "trs/grid.hpp"

namespace trs {

/// J x H x W confidences. Cell (u, v) is centered on image pixel
/// (u * stride, v * stride).
template <typename T>
struct HeatmapStack {
  Grid<T> values;
  int stride = 1;

  int joints() const { return values.channels; }
  int height() const { return values.height; }
  int width() const { return values.width; }

  friend bool operator==(const HeatmapStack&, const HeatmapStack&) = default;
};

inline constexpr double kDefaultSigma = 2.0;
inline constexpr double kDefaultConfidenceFloor = 0.05;

/// Gaussian target per joint; invisible joints get an all-zero channel.
template <typename T>
HeatmapStack<T> encode(const Pose& pose, double sigma, int height, int width, int stride) {
  if (!(sigma > 0.0)) throw ConfigError("encode: sigma must be positive");
  if (stride < 1 || height < 1 || width < 1) throw ConfigError("encode: invalid heatmap geometry");
  HeatmapStack<T> stack;
  stack.stride = stride;
  stack.values = Grid<T>(pose.size(), height, width);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  for (int j = 0; j < pose.size(); ++j) {
    const Keypoint& kp = pose[j];
    if (!kp.visible) continue;
    const double cx = kp.x / stride;
    const double cy = kp.y / stride;
    for (int v = 0; v < height; ++v) {
      const double dy = v - cy;
      for (int u = 0; u < width; ++u) {
        const double dx = u - cx;
        stack.values.at(j, v, u) = static_cast<T>(std::exp(-(dx * dx + dy * dy) * inv_two_var));
      }
    }
  }
  return stack;
}

/// Argmax per channel (ties: smallest row-major index), shifted a quarter
/// cell toward the larger axis neighbor, mapped back to pixels. Channels whose
/// maximum is below `confidence_floor` decode as invisible.
template <typename T>
Pose decode(const HeatmapStack<T>& stack, double confidence_floor = kDefaultConfidenceFloor) {
  const Grid<T>& g = stack.values;
  Pose pose(g.channels);
  for (int j = 0; j < g.channels; ++j) {
    auto plane = g.plane(j);
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane.size(); ++i) {
      if (plane[i] > plane[best]) best = i;
    }
    const int v = static_cast<int>(best / static_cast<std::size_t>(g.width));
    const int u = static_cast<int>(best % static_cast<std::size_t>(g.width));
    double fu = u;
    double fv = v;
    if (u > 0 && u + 1 < g.width) {
      const T l = g.at(j, v, u - 1);
      const T r = g.at(j, v, u + 1);
      if (r > l) fu += 0.25;
      if (l > r) fu -= 0.25;
    }
    if (v > 0 && v + 1 < g.height) {
      const T up = g.at(j, v - 1, u);
      const T down = g.at(j, v + 1, u);
      if (down > up) fv += 0.25;
      if (up > down) fv -= 0.25;
    }
    Keypoint& kp = pose[j];
    kp.x = fu * stack.stride;
    kp.y = fv * stack.stride;
    kp.visible = !plane.empty() && static_cast<double>(plane[best]) >= confidence_floor;
  }
  return pose;
}

/// Normalizing length for PCK: either a fixed pixel length or the per-pose
/// distance from the head joint to the shoulder midpoint.
struct PckReference {
  enum class Kind { fixed, head_size };
  Kind kind = Kind::head_size;
  double length = 0.0;
  int head = 0;
  int left_shoulder = 1;
  int right_shoulder = 2;

  static PckReference fixed(double pixels) { return {Kind::fixed, pixels, 0, 0, 0}; }
  static PckReference head_size(int head, int left, int right) { return {Kind::head_size, 0.0, head, left, right}; }

  /// Reference length for one ground-truth pose.
  double measure(const Pose& ground_truth) const;

  friend bool operator==(const PckReference&, const PckReference&) = default;
};

struct PckReport {
  std::vector<double> per_joint;
  std::vector<int> visible_per_joint;
  double total = 0.0;
  double threshold = 0.0;
};

/// A visible ground-truth joint is correct iff its prediction is visible and
/// within threshold * reference. Invisible ground-truth joints are excluded.
/// Throws ConfigError on empty or mismatched input.
PckReport pck(std::span<const Pose> predictions, std::span<const Pose> ground_truth, double threshold,
              const PckReference& reference);

}  // namespace trs
