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
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trs/grid.hpp"
#include "trs/heatmap.hpp"

namespace trs {

/// Initial bias of the output convolutions: logit(0.01).
inline constexpr double kOutputPriorLogit = -4.59511985013459;

/// Staged convolutional backbone with two heatmap heads.
///
/// Stage i is a 3x3 stride-2 convolution followed by ReLU, so the final stage
/// sits at stride 2^stages. Head z reads the final stage and head p the
/// penultimate one; each head repeats (bilinear 2x upsample, 3x3 conv, ReLU)
/// until it reaches the heatmap stride, and its last convolution emits one
/// channel per joint through a logistic output.
struct ArchConfig {
  int input_height = 64;
  int input_width = 64;
  std::vector<int> channels{8, 16, 32, 32};
  int head_channels = 16;
  int joints = 7;
  int heatmap_stride = 2;

  int stages() const { return static_cast<int>(channels.size()); }
  int heatmap_height() const { return input_height / heatmap_stride; }
  int heatmap_width() const { return input_width / heatmap_stride; }
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct LevelSet {
  bool z = true;
  bool p = true;

  int count() const { return static_cast<int>(z) + static_cast<int>(p); }
  static LevelSet both() { return {true, true}; }
  static LevelSet z_only() { return {true, false}; }
  friend bool operator==(const LevelSet&, const LevelSet&) = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Names and shapes of a network's parameters. The fingerprint hashes the
/// structure only, never the values.
struct ParameterLayout {
  std::vector<TensorInfo> tensors;
  std::size_t total = 0;
  std::string fingerprint;

  const TensorInfo& find(const std::string& name) const;
  static std::shared_ptr<const ParameterLayout> build(std::vector<std::pair<std::string, std::vector<int>>> entries);
};

/// Parameter values stored contiguously in layout order.
template <typename T>
struct ParameterSet {
  std::shared_ptr<const ParameterLayout> layout;
  std::vector<T> values;

  const std::string& fingerprint() const { return layout->fingerprint; }
  std::size_t size() const { return values.size(); }
  bool compatible(const ParameterSet& other) const {
    return layout && other.layout && layout->fingerprint == other.layout->fingerprint;
  }
  ParameterSet zeros_like() const { return {layout, std::vector<T>(values.size(), T(0))}; }
  bool all_finite() const;

  template <typename U>
  ParameterSet<U> cast() const {
    return {layout, std::vector<U>(values.begin(), values.end())};
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.compatible(b) && a.values == b.values;
  }
};

/// Stable 64-bit FNV-1a hash of parameter values, hex-encoded.
template <typename T>
std::string value_hash(const ParameterSet<T>& params);

template <typename T>
struct MultiLevelOutput {
  HeatmapStack<T> level_z;
  /// Empty when level p was not requested.
  HeatmapStack<T> level_p;
};

template <typename T>
struct ForwardCache;

template <typename T>
class Network {
 public:
  explicit Network(ArchConfig arch);

  const ArchConfig& arch() const { return arch_; }
  const std::shared_ptr<const ParameterLayout>& layout() const { return layout_; }

  /// Fan-in scaled uniform weights; zero biases except the output layers,
  /// which start at kOutputPriorLogit.
  ParameterSet<T> init(std::uint64_t seed) const;

  /// Forward pass; when `cache` is non-null it receives what backward needs.
  MultiLevelOutput<T> forward(const ParameterSet<T>& params, const Grid<T>& image, LevelSet levels = LevelSet::both(),
                              ForwardCache<T>* cache = nullptr) const;

  /// Accumulates dL/dparams into `grads` given dL/d(level_z) and dL/d(level_p)
  /// (either may be null).
  void backward(const ParameterSet<T>& params, const ForwardCache<T>& cache, const Grid<T>* d_level_z,
                const Grid<T>* d_level_p, ParameterSet<T>& grads) const;

  struct Conv {
    int cin = 0;
    int cout = 0;
    int stride = 1;
    bool upsample = false;
    bool logistic = false;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };

 private:
  void check(const ParameterSet<T>& params) const;

  ArchConfig arch_;
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<Conv> backbone_;
  std::vector<Conv> head_z_;
  std::vector<Conv> head_p_;
};

template <typename T>
struct ConvCache {
  int in_h = 0, in_w = 0;   // after optional upsample
  int src_h = 0, src_w = 0; // before upsample
  int out_h = 0, out_w = 0;
  std::vector<T> col;
  std::vector<T> out;
};

template <typename T>
struct ForwardCache {
  std::vector<ConvCache<T>> backbone;
  std::vector<ConvCache<T>> head_z;
  std::vector<ConvCache<T>> head_p;
  LevelSet levels;
};

template <typename T>
ParameterSet<T> init_network(std::uint64_t seed, const ArchConfig& arch) {
  return Network<T>(arch).init(seed);
}

template <typename T>
MultiLevelOutput<T> forward(const ParameterSet<T>& params, const ArchConfig& arch, const Grid<T>& image) {
  return Network<T>(arch).forward(params, image);
}

/// Records forward passes of one network and backpropagates output gradients
/// into a single gradient accumulator.
template <typename T>
class GradientTape {
 public:
  GradientTape(const Network<T>& net, const ParameterSet<T>& params)
      : net_(&net), params_(&params), grads_(params.zeros_like()) {}

  /// Returns a handle for backward(); the output stays valid until then.
  std::size_t forward(const Grid<T>& image, LevelSet levels = LevelSet::both());
  const MultiLevelOutput<T>& output(std::size_t handle) const { return records_.at(handle)->output; }
  /// Backpropagates through the recorded pass and releases it.
  void backward(std::size_t handle, const Grid<T>* d_level_z, const Grid<T>* d_level_p);

  const ParameterSet<T>& gradients() const { return grads_; }
  ParameterSet<T> take_gradients() { return std::move(grads_); }

 private:
  struct Record {
    ForwardCache<T> cache;
    MultiLevelOutput<T> output;
  };
  const Network<T>* net_;
  const ParameterSet<T>* params_;
  ParameterSet<T> grads_;
  std::vector<std::optional<Record>> records_;
};

template <typename T>
struct LossGradient {
  T loss = T(0);
  ParameterSet<T> grads;
};

/// Runs `closure(tape)`, which performs forward passes, seeds output gradients
/// through tape.backward and returns the scalar loss. Throws NonFiniteLoss.
template <typename T, typename Closure>
LossGradient<T> loss_gradient(const Network<T>& net, const ParameterSet<T>& params, Closure&& closure) {
  GradientTape<T> tape(net, params);
  const T loss = closure(tape);
  if (!std::isfinite(static_cast<double>(loss))) throw NonFiniteLoss(static_cast<double>(loss));
  return {loss, tape.take_gradients()};
}

/// params - learning_rate * grads.
template <typename T>
ParameterSet<T> apply_sgd_step(const ParameterSet<T>& params, const ParameterSet<T>& grads, double learning_rate);

enum class OptimizerKind { sgd, adam };

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// Bias-corrected Adam update; `state` is created on first use.
template <typename T>
ParameterSet<T> apply_adam_step(const ParameterSet<T>& params, const ParameterSet<T>& grads, double learning_rate,
                                AdamState<T>& state);

}  // namespace trs
