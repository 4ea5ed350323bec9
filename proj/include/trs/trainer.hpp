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

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trs/augment.hpp"
#include "trs/datagen.hpp"
#include "trs/heatmap.hpp"
#include "trs/model.hpp"
#include "trs/rng.hpp"

namespace trs {

/// Members of the four-network ensemble. G and F alternate as teacher and
/// student; R1 and R2 are their moving-average reviewers.
enum class Role : int { g = 0, f = 1, r1 = 2, r2 = 3 };

inline constexpr std::array<Role, 4> kAllRoles{Role::g, Role::f, Role::r1, Role::r2};
const char* role_name(Role role);

enum class TrainingMode { trs, baseline, supervised };
const char* mode_name(TrainingMode mode);
TrainingMode parse_mode(const std::string& text);

struct Ablation {
  bool mfl = true;
  bool km = true;
  bool reviewer = true;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct TrainingConfig {
  double lambda = 0.5;
  double alpha = 0.999;
  double beta = 0.999;
  /// Mean-teacher momentum; used only by the baseline mode.
  double eta = 0.999;
  int k_mix = 5;
  /// Keypoint-Mix patch half-size in pixels; 0 selects 2 * sigma * stride.
  int km_patch_half = 0;
  int batch_labeled = 8;
  int batch_unlabeled = 8;
  std::int64_t max_iterations = 1000;
  LevelSet levels = LevelSet::both();
  Ablation ablation;
  /// When false, reviewers are updated by EMA only.
  bool reviewer_grad = true;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.001;
  /// x0.1 at 70% and again at 90% of max_iterations.
  bool lr_decay = true;
  double sigma = kDefaultSigma;
  AugmentConfig augment;
  TrainingMode mode = TrainingMode::trs;
  std::uint64_t seed = 0;
  int log_interval = 50;
  double pck_threshold = 0.2;

  /// Checks ranges and that levels = {z} exactly when mfl is off.
  void validate() const;
  /// Sets the mfl flag and the level set together.
  void set_mfl(bool on);
  int patch_half(int heatmap_stride) const;
  double learning_rate_at(std::int64_t iteration) const;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

template <typename T>
struct NetworkEnsemble {
  std::array<ParameterSet<T>, 4> nets;
  std::int64_t iteration = 0;

  ParameterSet<T>& operator[](Role r) { return nets[static_cast<std::size_t>(r)]; }
  const ParameterSet<T>& operator[](Role r) const { return nets[static_cast<std::size_t>(r)]; }
  ParameterSet<T>& g() { return (*this)[Role::g]; }
  ParameterSet<T>& f() { return (*this)[Role::f]; }
  ParameterSet<T>& r1() { return (*this)[Role::r1]; }
  ParameterSet<T>& r2() { return (*this)[Role::r2]; }
  const ParameterSet<T>& g() const { return (*this)[Role::g]; }
  const ParameterSet<T>& f() const { return (*this)[Role::f]; }
  const ParameterSet<T>& r1() const { return (*this)[Role::r1]; }
  const ParameterSet<T>& r2() const { return (*this)[Role::r2]; }

  friend bool operator==(const NetworkEnsemble&, const NetworkEnsemble&) = default;
};

/// G and F from independent seeds; reviewers start as exact copies of them.
template <typename T>
NetworkEnsemble<T> make_ensemble(const Network<T>& net, std::uint64_t seed);

/// One summand of a loss: network `role` at `level` against `target`
/// ("gt", or the teacher role that produced the target).
struct TermLog {
  Role role = Role::g;
  char level = 'z';
  std::string target;
  double value = 0.0;
};

template <typename T>
struct LossTerms {
  T value = T(0);
  std::array<ParameterSet<T>, 4> grads;
  std::vector<TermLog> terms;
};

/// Sum over samples, active networks and levels of the masked heatmap MSE
/// against the encoded ground truth. Reviewers participate iff `reviewers`.
template <typename T>
LossTerms<T> supervised_loss(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                             std::span<const Sample* const> batch, LevelSet levels, bool reviewers, double sigma);

/// Easy/hard views of one unlabeled image for one consistency direction.
template <typename T>
struct ViewPair {
  Grid<T> easy;
  Grid<T> hard;
  AffineTransform t_easy;
  AffineTransform t_hard;
};

/// Student inputs plus detached targets already mapped into the hard frame.
template <typename T>
struct DirectionBatch {
  std::vector<Grid<T>> student_inputs;
  std::vector<std::vector<HeatmapStack<T>>> targets;
  std::vector<Role> target_roles;
};

/// Runs the teacher networks on the easy views and maps their level-z
/// predictions with map_easy_to_hard. No gradient flows through these.
template <typename T>
DirectionBatch<T> make_direction_batch(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                                       std::span<const ViewPair<T>> views, std::span<const Role> teachers);

/// Sum over samples, targets and student levels of the MSE between the
/// student's hard-view prediction and each mapped target. Only `student`
/// receives gradient.
template <typename T>
LossTerms<T> student_consistency_loss(const Network<T>& net, const NetworkEnsemble<T>& ensemble, Role student,
                                      const DirectionBatch<T>& batch, LevelSet levels);

/// G (and R1 when `reviewers`) teach F.
template <typename T>
LossTerms<T> consistency_loss_1(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                                std::span<const ViewPair<T>> views, LevelSet levels, bool reviewers);

/// F (and R2 when `reviewers`) teach G.
template <typename T>
LossTerms<T> consistency_loss_2(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                                std::span<const ViewPair<T>> views, LevelSet levels, bool reviewers);

/// momentum * target + (1 - momentum) * source, element-wise.
template <typename T>
ParameterSet<T> ema_update(const ParameterSet<T>& target, const ParameterSet<T>& source, double momentum);

struct StepReport {
  std::int64_t iteration = 0;
  double loss_sup = 0.0;
  double loss_un1 = 0.0;
  double loss_un2 = 0.0;
  double loss_total = 0.0;
  double learning_rate = 0.0;
  /// L2 norm of each network's parameter change over the step (g, f, r1, r2).
  std::array<double, 4> change_norm{};
  /// L2 distance between each reviewer before and after its EMA update.
  std::array<double, 2> reviewer_ema_gap{};
  std::vector<TermLog> terms;
};

class TrainingAborted : public Error {
 public:
  explicit TrainingAborted(StepReport report)
      : Error("training aborted at iteration " + std::to_string(report.iteration) +
              ": non-finite total loss " + std::to_string(report.loss_total)),
        report_(std::move(report)) {}
  const StepReport& report() const { return report_; }

 private:
  StepReport report_;
};

template <typename T>
struct TrainState {
  NetworkEnsemble<T> ensemble;
  std::array<AdamState<T>, 4> adam;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

template <typename T>
struct StepResult {
  TrainState<T> state;
  StepReport report;
  /// Ensemble after the gradient update and before the reviewer EMA.
  NetworkEnsemble<T> post_gradient;
};

/// Views for every unlabeled sample of one step, both directions.
template <typename T>
struct StepViews {
  std::vector<ViewPair<T>> for_f;
  std::vector<ViewPair<T>> for_g;
  /// Keypoint-Mix selections in the hard frame, per direction and sample.
  std::vector<KeypointMixResult> mix_for_f;
  std::vector<KeypointMixResult> mix_for_g;
};

/// Builds the easy views, runs the teachers, builds the hard views (affine,
/// then Keypoint-Mix from the teacher's decoded keypoints when enabled).
/// Returns the views together with the per-direction batches.
template <typename T>
StepViews<T> build_step_views(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                              std::span<const Sample* const> unlabeled, const TrainingConfig& config, Rng& rng,
                              DirectionBatch<T>* batch_for_f, DirectionBatch<T>* batch_for_g);

/// Total loss lambda * L_sup + L_un1 + L_un2 with per-network gradients.
template <typename T>
struct TotalLoss {
  LossTerms<T> sup;
  LossTerms<T> un1;
  LossTerms<T> un2;
  T total = T(0);
  std::array<ParameterSet<T>, 4> grads;
};

template <typename T>
TotalLoss<T> total_loss(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                        std::span<const Sample* const> labeled, const DirectionBatch<T>& batch_for_f,
                        const DirectionBatch<T>& batch_for_g, const TrainingConfig& config);

/// One iteration of the four-network protocol: views, losses, one optimizer
/// step on every active network, reviewer EMA, iteration + 1.
template <typename T>
StepResult<T> train_step(const Network<T>& net, const TrainState<T>& state, std::span<const Sample* const> labeled,
                         std::span<const Sample* const> unlabeled, const TrainingConfig& config);

/// Classic mean teacher: the student gets the gradient step, the teacher
/// follows by EMA with momentum eta.
template <typename T>
struct BaselineResult {
  ParameterSet<T> teacher;
  ParameterSet<T> student;
  AdamState<T> student_adam;
  StepReport report;
};

template <typename T>
BaselineResult<T> baseline_mean_teacher_step(const Network<T>& net, const ParameterSet<T>& teacher,
                                             const ParameterSet<T>& student, const AdamState<T>& student_adam,
                                             std::span<const Sample* const> labeled,
                                             std::span<const Sample* const> unlabeled, const TrainingConfig& config,
                                             std::int64_t iteration);

enum class Which { g, f, r1, r2, mean_gf };
const char* which_name(Which which);
Which parse_which(const std::string& text);

template <typename T>
PckReport evaluate(const Network<T>& net, const NetworkEnsemble<T>& ensemble, std::span<const Sample> dataset,
                   Which which, double threshold, const PckReference& reference);

struct MetricsRow {
  std::int64_t iteration = 0;
  double loss_sup = 0.0;
  double loss_un1 = 0.0;
  double loss_un2 = 0.0;
  double loss_total = 0.0;
  double pck_g = 0.0;
  double pck_f = 0.0;
  double pck_mean = 0.0;
  double pck_r1 = 0.0;
  double pck_r2 = 0.0;
  double wall_ms = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

template <typename T>
struct TrainHooks {
  std::function<void(const MetricsRow&)> on_metrics;
  /// Called every `checkpoint_interval` iterations (0 disables) and at exit.
  std::function<void(const TrainState<T>&)> on_checkpoint;
  /// Called with the last good state before a TrainingAborted propagates.
  std::function<void(const TrainState<T>&)> on_abort;
  std::int64_t checkpoint_interval = 0;
};

template <typename T>
struct TrainResult {
  TrainState<T> state;
  std::vector<MetricsRow> history;
};

/// Runs iterations state.iteration .. max_iterations with seeded batch
/// sampling (each subset cycled through per-epoch permutations).
/// Validation PCK is computed every log_interval and at the end.
template <typename T>
TrainResult<T> train(const Network<T>& net, const DatasetSplit& split, std::span<const Sample> validation,
                     const TrainingConfig& config, const PckReference& reference,
                     std::optional<TrainState<T>> resume = std::nullopt, const TrainHooks<T>& hooks = {});

/// Indices of the samples drawn at `iteration` from a subset of `size` items.
std::vector<std::size_t> batch_indices(std::uint64_t stream_seed, std::size_t size, std::int64_t iteration, int batch);

}  // namespace trs
