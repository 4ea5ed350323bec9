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

#include "trs/augment.hpp"

#include <numbers>

namespace trs {

AffineTransform AffineTransform::rotation_scale(double degrees, double scale, double cx, double cy) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double a = scale * std::cos(rad);
  const double b = scale * std::sin(rad);
  // [a -b; b a] about (cx, cy).
  return {{a, -b, cx - a * cx + b * cy, b, a, cy - b * cx - a * cy}};
}

AffineTransform AffineTransform::inverse() const {
  const double d = det();
  if (!(std::abs(d) > 1e-8)) throw ConfigError("affine transform is not invertible (det=" + std::to_string(d) + ")");
  const double ia = m[4] / d;
  const double ib = -m[1] / d;
  const double ic = -m[3] / d;
  const double id = m[0] / d;
  return {{ia, ib, -(ia * m[2] + ib * m[5]), ic, id, -(ic * m[2] + id * m[5])}};
}

AffineTransform AffineTransform::then(const AffineTransform& n) const {
  // n * this, both as 3x3 with last row (0 0 1).
  return {{n.m[0] * m[0] + n.m[1] * m[3], n.m[0] * m[1] + n.m[1] * m[4], n.m[0] * m[2] + n.m[1] * m[5] + n.m[2],
           n.m[3] * m[0] + n.m[4] * m[3], n.m[3] * m[1] + n.m[4] * m[4], n.m[3] * m[2] + n.m[4] * m[5] + n.m[5]}};
}

AffineTransform AffineTransform::in_cells(int stride) const {
  // S^-1 * A * S, S = diag(stride, stride, 1).
  const double s = stride;
  return {{m[0], m[1], m[2] / s, m[3], m[4], m[5] / s}};
}

AffineDraw sample_affine_draw(Rng& rng, Strength strength, const AugmentConfig& config, int width, int height) {
  const AugmentRange& r = config.range(strength);
  AffineDraw draw;
  draw.rotation_deg = rng.uniform(-r.max_rotation_deg, r.max_rotation_deg);
  draw.scale = rng.uniform(r.min_scale, r.max_scale);
  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  if (draw.rotation_deg == 0.0 && draw.scale == 1.0) {
    draw.transform = AffineTransform::identity();
  } else {
    draw.transform = AffineTransform::rotation_scale(draw.rotation_deg, draw.scale, cx, cy);
  }
  return draw;
}

Pose transform_pose(const Pose& pose, const AffineTransform& transform, int width, int height) {
  Pose out(pose.size());
  for (int j = 0; j < pose.size(); ++j) {
    const Keypoint& kp = pose[j];
    if (!kp.visible) continue;
    const auto [x, y] = transform.apply(kp.x, kp.y);
    out[j].x = x;
    out[j].y = y;
    out[j].visible = x >= 0.0 && y >= 0.0 && x < width && y < height;
  }
  return out;
}

KeypointMixResult keypoint_mix(const Image& image, const Pose& predicted, int k, int patch_half, Rng& rng) {
  if (patch_half < 1) throw ConfigError("keypoint_mix: patch_half must be >= 1");
  if (k < 0) throw ConfigError("keypoint_mix: k must be non-negative");
  const int side = 2 * patch_half + 1;
  if (side > image.width || side > image.height) throw ConfigError("keypoint_mix: patch larger than image");

  KeypointMixResult result;
  result.image = image;
  result.patch_half = patch_half;
  if (k == 0) return result;

  std::vector<int> candidates;
  for (int j = 0; j < predicted.size(); ++j) {
    if (predicted[j].visible) candidates.push_back(j);
  }
  if (static_cast<int>(candidates.size()) < k) throw InsufficientKeypoints(k, static_cast<int>(candidates.size()));

  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    const auto pick = i + static_cast<int>(rng.below(candidates.size() - static_cast<std::size_t>(i)));
    std::swap(candidates[i], candidates[pick]);
  }
  result.joints.assign(candidates.begin(), candidates.begin() + k);
  std::sort(result.joints.begin(), result.joints.end());

  for (int j : result.joints) {
    const int cx = std::clamp(static_cast<int>(std::lround(predicted[j].x)), patch_half, image.width - 1 - patch_half);
    const int cy = std::clamp(static_cast<int>(std::lround(predicted[j].y)), patch_half, image.height - 1 - patch_half);
    result.centers.emplace_back(cx, cy);
  }

  // Patches come from the input image, so overlapping writes do not feed back.
  std::vector<double> sum(static_cast<std::size_t>(side) * side, 0.0);
  for (const auto& [cx, cy] : result.centers) {
    for (int dy = 0; dy < side; ++dy) {
      for (int dx = 0; dx < side; ++dx) {
        sum[static_cast<std::size_t>(dy) * side + dx] += image.at(0, cy - patch_half + dy, cx - patch_half + dx);
      }
    }
  }
  std::vector<float> blended(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) blended[i] = static_cast<float>(sum[i] / k);

  for (const auto& [cx, cy] : result.centers) {
    for (int dy = 0; dy < side; ++dy) {
      for (int dx = 0; dx < side; ++dx) {
        result.image.at(0, cy - patch_half + dy, cx - patch_half + dx) = blended[static_cast<std::size_t>(dy) * side + dx];
      }
    }
  }
  return result;
}

KeypointMixResult keypoint_mix_clamped(const Image& image, const Pose& predicted, int k, int patch_half, Rng& rng) {
  const int visible = predicted.visible_count();
  return keypoint_mix(image, predicted, std::min(k, visible), patch_half, rng);
}

}  // namespace trs
