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

#include "trs/heatmap.hpp"

#include <cmath>

namespace trs {

double PckReference::measure(const Pose& gt) const {
  if (kind == Kind::fixed) return length;
  const int n = gt.size();
  if (head >= n || left_shoulder >= n || right_shoulder >= n || head < 0 || left_shoulder < 0 ||
      right_shoulder < 0) {
    throw ConfigError("PCK reference joints out of range for pose of size " + std::to_string(n));
  }
  const Keypoint& h = gt[head];
  const Keypoint& l = gt[left_shoulder];
  const Keypoint& r = gt[right_shoulder];
  const double mx = 0.5 * (l.x + r.x);
  const double my = 0.5 * (l.y + r.y);
  return std::hypot(h.x - mx, h.y - my);
}

PckReport pck(std::span<const Pose> predictions, std::span<const Pose> ground_truth, double threshold,
              const PckReference& reference) {
  if (predictions.empty() || ground_truth.empty()) throw ConfigError("pck: empty input");
  if (predictions.size() != ground_truth.size()) throw ConfigError("pck: prediction/ground-truth count mismatch");
  const int joints = ground_truth.front().size();
  std::vector<int> correct(static_cast<std::size_t>(joints), 0);
  std::vector<int> visible(static_cast<std::size_t>(joints), 0);
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const Pose& gt = ground_truth[i];
    const Pose& pred = predictions[i];
    if (gt.size() != joints || pred.size() != joints) throw ConfigError("pck: inconsistent joint count");
    const double radius = threshold * reference.measure(gt);
    for (int j = 0; j < joints; ++j) {
      if (!gt[j].visible) continue;
      ++visible[j];
      if (!pred[j].visible) continue;
      if (std::hypot(pred[j].x - gt[j].x, pred[j].y - gt[j].y) <= radius) ++correct[j];
    }
  }
  PckReport report;
  report.threshold = threshold;
  report.visible_per_joint = visible;
  report.per_joint.resize(static_cast<std::size_t>(joints), 0.0);
  long total_correct = 0;
  long total_visible = 0;
  for (int j = 0; j < joints; ++j) {
    if (visible[j] > 0) report.per_joint[j] = static_cast<double>(correct[j]) / visible[j];
    total_correct += correct[j];
    total_visible += visible[j];
  }
  if (total_visible == 0) throw ConfigError("pck: no visible ground-truth joints");
  report.total = static_cast<double>(total_correct) / static_cast<double>(total_visible);
  return report;
}

}  // namespace trs
