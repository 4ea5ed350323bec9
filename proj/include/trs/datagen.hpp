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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trs/grid.hpp"

namespace trs {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// Ordered keypoints of one figure. The joint count is fixed at construction.
class Pose {
 public:
  Pose() = default;
  explicit Pose(int joints) : keypoints_(static_cast<std::size_t>(joints)) {}
  explicit Pose(std::vector<Keypoint> keypoints) : keypoints_(std::move(keypoints)) {}

  int size() const { return static_cast<int>(keypoints_.size()); }
  Keypoint& operator[](int j) { return keypoints_[static_cast<std::size_t>(j)]; }
  const Keypoint& operator[](int j) const { return keypoints_[static_cast<std::size_t>(j)]; }
  const std::vector<Keypoint>& keypoints() const { return keypoints_; }
  int visible_count() const;

  friend bool operator==(const Pose&, const Pose&) = default;

 private:
  std::vector<Keypoint> keypoints_;
};

struct Sample {
  std::int64_t id = 0;
  Image image;
  /// Present iff the sample is labeled.
  std::optional<Pose> pose;
  /// Generator-side pose of an unlabeled synthetic sample. Diagnostics only;
  /// the trainer never reads it.
  std::optional<Pose> hidden_pose;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetSplit {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// One tree edge of the stick figure. The child is placed at
/// parent + length * direction, where direction is measured from the body's
/// "down" axis, positive toward +x.
struct Bone {
  int parent = 0;
  int child = 0;
  double min_length = 0.0;
  double max_length = 0.0;
  double angle_deg = 0.0;
  double angle_jitter_deg = 0.0;
  float intensity = 0.6f;
  double thickness = 1.5;

  friend bool operator==(const Bone&, const Bone&) = default;
};

struct SkeletonConfig {
  int width = 64;
  int height = 64;
  std::vector<std::string> joint_names;
  /// Bones in topological order from joint 0 (the root).
  std::vector<Bone> bones;
  std::vector<double> joint_radius;
  double body_rotation_deg = 30.0;
  double background_noise = 0.08;
  int distractors = 2;
  double margin = 3.0;
  /// Joints defining the per-pose reference length (head to shoulder midpoint).
  int head_joint = 0;
  int left_shoulder_joint = 1;
  int right_shoulder_joint = 2;

  int joints() const { return static_cast<int>(joint_names.size()); }
  void validate() const;

  /// Seven joints: head, shoulders, hands, feet.
  static SkeletonConfig stick_figure(int width = 64, int height = 64);

  friend bool operator==(const SkeletonConfig&, const SkeletonConfig&) = default;
};

/// Renders one stick figure. Pure function of (seed, config).
Sample generate_scene(std::uint64_t seed, const SkeletonConfig& config, std::int64_t id = 0);

/// Scenes [first_index, first_index + count) of the stream rooted at `seed`.
/// Sample i uses seed derive_seed(seed, i) and id i.
std::vector<Sample> generate_samples(std::uint64_t seed, std::int64_t first_index, std::int64_t count,
                                     const SkeletonConfig& config, bool labeled);

DatasetSplit build_split(std::uint64_t seed, int n_labeled, int n_unlabeled, const SkeletonConfig& config);

/// Labeled scenes drawn from the same stream as build_split, after the
/// training indices, so ids never collide with the training split.
std::vector<Sample> build_validation(std::uint64_t seed, int n_labeled, int n_unlabeled, int count,
                                     const SkeletonConfig& config);

struct LoadReport {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

struct LoadedDataset {
  DatasetSplit split;
  LoadReport report;
  std::vector<std::string> joint_names;
  /// Free-form "info" object of the index, serialized JSON ("{}" if absent).
  std::string info_json = "{}";
};

/// Reads a COCO-style keypoint index. Images are converted to grayscale and
/// resampled to (width, height) when their size differs; keypoints follow.
/// Keypoint coordinates are pixel-center coordinates (column, row).
LoadedDataset load_coco_subset(const std::filesystem::path& annotation_path,
                               const std::filesystem::path& image_dir, int width = 64, int height = 64);

/// Writes images/<id>.png plus index.json in the COCO-subset layout.
void save_dataset(const std::filesystem::path& dir, const DatasetSplit& split,
                  const std::vector<std::string>& joint_names, const std::string& info_json = "{}");

/// Percentile (0..100) of an image's pixel values, nearest-rank.
float percentile(const Image& image, double pct);

}  // namespace trs
