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

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "trs/datagen.hpp"
#include "trs/model.hpp"
#include "trs/rng.hpp"

namespace trs::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("trs_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Two stages of four channels on a 16x16 input: the smallest network that
/// still has both heads.
inline ArchConfig micro_arch() {
  ArchConfig a;
  a.input_height = 16;
  a.input_width = 16;
  a.channels = {4, 4};
  a.head_channels = 4;
  a.joints = 3;
  a.heatmap_stride = 2;
  return a;
}

/// Uniform noise in [0, 1).
inline Image random_image(Rng& rng, int height, int width) {
  Image img(1, height, width);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

inline Pose random_pose(Rng& rng, int joints, int height, int width) {
  Pose p(joints);
  for (int j = 0; j < joints; ++j) p[j] = {rng.uniform(1.0, width - 2.0), rng.uniform(1.0, height - 2.0), true};
  return p;
}

/// Labeled micro samples with random images and poses.
inline std::vector<Sample> micro_samples(std::uint64_t seed, int count, bool labeled, const ArchConfig& arch) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.id = i;
    s.image = random_image(rng, arch.input_height, arch.input_width);
    Pose p = random_pose(rng, arch.joints, arch.input_height, arch.input_width);
    if (labeled) {
      s.pose = p;
    } else {
      s.hidden_pose = p;
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Zeroes every parameter and sets the output-layer biases to `bias`, so every
/// heatmap element equals logistic(bias).
template <typename T>
ParameterSet<T> constant_output(const ParameterSet<T>& like, int joints, double bias) {
  ParameterSet<T> p = like.zeros_like();
  for (const TensorInfo& t : p.layout->tensors) {
    if (t.shape.size() == 1 && t.shape.front() == joints && t.name.ends_with(".bias"))
      for (std::size_t i = 0; i < t.size; ++i) p.values[t.offset + i] = static_cast<T>(bias);
  }
  return p;
}

/// Adds uniform noise in [-amount, amount] to every bias. Zero biases put
/// ReLU inputs exactly on the kink wherever a patch is all zero (warped views
/// are zero-filled), where central differences average the one-sided slopes.
template <typename T>
void jitter_biases(ParameterSet<T>& params, Rng& rng, double amount) {
  for (const TensorInfo& t : params.layout->tensors) {
    if (t.shape.size() != 1) continue;
    for (std::size_t i = 0; i < t.size; ++i) params.values[t.offset + i] += static_cast<T>(rng.uniform(-amount, amount));
  }
}

inline std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
  std::vector<const Sample*> out;
  for (const Sample& s : v) out.push_back(&s);
  return out;
}

}  // namespace trs::test
