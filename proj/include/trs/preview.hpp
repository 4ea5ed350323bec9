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
#include <vector>

#include "trs/augment.hpp"
#include "trs/datagen.hpp"
#include "trs/model.hpp"

namespace trs {

struct PreviewOptions {
  int k_mix = 5;
  /// 0 selects 2 * sigma * heatmap_stride.
  int patch_half = 0;
  std::uint64_t seed = 0;
  double sigma = kDefaultSigma;
  AugmentConfig augment;
};

struct PreviewResult {
  Image original;
  Image easy;
  Image hard;
  Image mixed;
  KeypointMixResult mix;
  std::vector<std::filesystem::path> files;
};

/// Writes original.png, easy.png, hard.png, mixed.png, panel.png and one
/// heatmap PNG per joint (ground truth when the sample is labeled, the
/// network's level-z prediction when `params` is given). Keypoint-Mix uses
/// the ground-truth pose, else the prediction on the easy view, else the
/// generator pose.
PreviewResult write_preview(const std::filesystem::path& dir, const Sample& sample, const ArchConfig& arch,
                            const PreviewOptions& options, const ParameterSet<float>* params = nullptr);

}  // namespace trs
