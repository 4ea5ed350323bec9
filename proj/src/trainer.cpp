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

#include "trs/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace trs {

namespace {

constexpr std::uint64_t kStepStream = 11;
constexpr std::uint64_t kLabeledStream = 12;
constexpr std::uint64_t kUnlabeledStream = 13;

/// Flushes denormals to zero for the scope. Saturated logistic outputs and
/// their gradients otherwise fall into the denormal range and slow every
/// subsequent convolution by an order of magnitude.
class DenormalGuard {
 public:
#if defined(__SSE__)
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

std::size_t idx(Role r) { return static_cast<std::size_t>(r); }

template <typename T>
Grid<T> as_grid(const Image& image) {
  if constexpr (std::is_same_v<T, float>) {
    return image;
  } else {
    return image.template cast<T>();
  }
}

/// Adds scale * d(mean squared error)/d(pred) into `grad` and returns the
/// mean. With `mask`, only channels whose flag is set contribute and the mean
/// runs over their elements; no unmasked channel gives 0.
template <typename T>
T mse(const Grid<T>& pred, const Grid<T>& target, const std::vector<char>* mask, Grid<T>& grad, T scale) {
  require_same_shape(pred, target, "mse");
  const std::size_t plane = static_cast<std::size_t>(pred.height) * static_cast<std::size_t>(pred.width);
  std::size_t count = 0;
  for (int c = 0; c < pred.channels; ++c) {
    if (!mask || (*mask)[static_cast<std::size_t>(c)]) count += plane;
  }
  if (count == 0) return T(0);
  const T inv = T(1) / static_cast<T>(count);
  T sum = T(0);
  for (int c = 0; c < pred.channels; ++c) {
    if (mask && !(*mask)[static_cast<std::size_t>(c)]) continue;
    const std::size_t base = static_cast<std::size_t>(c) * plane;
    for (std::size_t i = base; i < base + plane; ++i) {
      const T d = pred.data[i] - target.data[i];
      sum += d * d;
      grad.data[i] += scale * T(2) * d * inv;
    }
  }
  return sum * inv;
}

template <typename T>
std::array<ParameterSet<T>, 4> zero_grads(const NetworkEnsemble<T>& e) {
  return {e.g().zeros_like(), e.f().zeros_like(), e.r1().zeros_like(), e.r2().zeros_like()};
}

template <typename T>
void check_ensemble(const NetworkEnsemble<T>& e) {
  for (Role r : kAllRoles) {
    if (!e[r].compatible(e.g())) throw ShapeError("ensemble: parameter fingerprints differ");
  }
}

/// Supervised term of one network; returns the value and fills `grads`.
template <typename T>
T supervised_one(const Network<T>& net, const ParameterSet<T>& params, Role role,
                 std::span<const Sample* const> batch, LevelSet levels, double sigma, ParameterSet<T>& grads,
                 std::vector<TermLog>& terms) {
  const ArchConfig& arch = net.arch();
  GradientTape<T> tape(net, params);
  T total = T(0);
  for (const Sample* s : batch) {
    if (!s->pose) throw ConfigError("supervised_loss: sample " + std::to_string(s->id) + " has no pose");
    const HeatmapStack<T> target =
        encode<T>(*s->pose, sigma, arch.heatmap_height(), arch.heatmap_width(), arch.heatmap_stride);
    std::vector<char> mask(static_cast<std::size_t>(s->pose->size()));
    for (int j = 0; j < s->pose->size(); ++j) mask[static_cast<std::size_t>(j)] = (*s->pose)[j].visible;
    const std::size_t h = tape.forward(as_grid<T>(s->image), levels);
    const MultiLevelOutput<T>& out = tape.output(h);
    Grid<T> dz;
    Grid<T> dp;
    if (levels.z) {
      dz = Grid<T>(target.values.channels, target.values.height, target.values.width);
      const T v = mse(out.level_z.values, target.values, &mask, dz, T(1));
      terms.push_back({role, 'z', "gt", static_cast<double>(v)});
      total += v;
    }
    if (levels.p) {
      dp = Grid<T>(target.values.channels, target.values.height, target.values.width);
      const T v = mse(out.level_p.values, target.values, &mask, dp, T(1));
      terms.push_back({role, 'p', "gt", static_cast<double>(v)});
      total += v;
    }
    tape.backward(h, levels.z ? &dz : nullptr, levels.p ? &dp : nullptr);
  }
  grads = tape.take_gradients();
  return total;
}

template <typename T>
T consistency_one(const Network<T>& net, const ParameterSet<T>& params, Role student,
                  const DirectionBatch<T>& batch, LevelSet levels, ParameterSet<T>& grads,
                  std::vector<TermLog>& terms) {
  if (batch.targets.size() != batch.student_inputs.size()) throw ConfigError("consistency: views and targets differ");
  GradientTape<T> tape(net, params);
  T total = T(0);
  for (std::size_t i = 0; i < batch.student_inputs.size(); ++i) {
    const auto& targets = batch.targets[i];
    const std::size_t h = tape.forward(batch.student_inputs[i], levels);
    const MultiLevelOutput<T>& out = tape.output(h);
    Grid<T> dz;
    Grid<T> dp;
    auto level_terms = [&](const HeatmapStack<T>& pred, char level, Grid<T>& d) {
      d = Grid<T>(pred.values.channels, pred.values.height, pred.values.width);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const T v = mse(pred.values, targets[t].values, nullptr, d, T(1));
        terms.push_back({student, level, role_name(batch.target_roles.at(t)), static_cast<double>(v)});
        total += v;
      }
    };
    if (levels.z) level_terms(out.level_z, 'z', dz);
    if (levels.p) level_terms(out.level_p, 'p', dp);
    tape.backward(h, levels.z ? &dz : nullptr, levels.p ? &dp : nullptr);
  }
  grads = tape.take_gradients();
  return total;
}

template <typename T>
ParameterSet<T> optimizer_step(const ParameterSet<T>& params, const ParameterSet<T>& grads,
                               const TrainingConfig& config, double lr, AdamState<T>& adam) {
  if (config.optimizer == OptimizerKind::adam) return apply_adam_step(params, grads, lr, adam);
  return apply_sgd_step(params, grads, lr);
}

template <typename T>
double l2_distance(const ParameterSet<T>& a, const ParameterSet<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

Rng step_rng(const TrainingConfig& config, std::int64_t iteration) {
  return Rng(derive_seed(derive_seed(config.seed, kStepStream), static_cast<std::uint64_t>(iteration)));
}

bool reviewers_active(const TrainingConfig& config) {
  return config.mode != TrainingMode::baseline && config.ablation.reviewer;
}

/// Views and targets of one direction. `teachers[0]` decodes keypoints for
/// Keypoint-Mix.
template <typename T>
void build_direction(const Network<T>& net, std::span<const Sample* const> unlabeled,
                     std::span<const std::pair<Role, const ParameterSet<T>*>> teachers,
                     const TrainingConfig& config, Rng& rng, std::vector<ViewPair<T>>& views,
                     std::vector<KeypointMixResult>& mixes, DirectionBatch<T>* batch) {
  const ArchConfig& arch = net.arch();
  const int w = arch.input_width;
  const int h = arch.input_height;
  const int patch_half = config.patch_half(arch.heatmap_stride);
  if (batch) {
    batch->student_inputs.clear();
    batch->targets.clear();
    batch->target_roles.clear();
    for (const auto& t : teachers) batch->target_roles.push_back(t.first);
  }
  for (const Sample* s : unlabeled) {
    if (s->image.height != h || s->image.width != w) throw ShapeError("train_step: unlabeled image size mismatch");
    const AffineTransform t_easy = sample_affine(rng, Strength::easy, config.augment, w, h);
    const AffineTransform t_hard = sample_affine(rng, Strength::hard, config.augment, w, h);
    const Image easy = warp_image(s->image, t_easy);
    Image hard = warp_image(s->image, t_hard);
    const Grid<T> easy_t = as_grid<T>(easy);

    std::vector<HeatmapStack<T>> targets;
    Pose teacher_pose;
    for (std::size_t k = 0; k < teachers.size(); ++k) {
      const MultiLevelOutput<T> out = net.forward(*teachers[k].second, easy_t, LevelSet::z_only());
      if (k == 0) teacher_pose = decode(out.level_z);
      targets.push_back(map_easy_to_hard(out.level_z, t_easy, t_hard));
    }

    KeypointMixResult mix;
    if (config.ablation.km && config.k_mix > 0) {
      const Pose in_hard = transform_pose(teacher_pose, t_easy.inverse().then(t_hard), w, h);
      mix = keypoint_mix_clamped(hard, in_hard, config.k_mix, patch_half, rng);
      hard = mix.image;
    } else {
      mix.image = hard;
      mix.patch_half = patch_half;
    }
    ViewPair<T> view{easy_t, as_grid<T>(hard), t_easy, t_hard};
    if (batch) {
      batch->student_inputs.push_back(view.hard);
      batch->targets.push_back(std::move(targets));
    }
    views.push_back(std::move(view));
    mixes.push_back(std::move(mix));
  }
}

}  // namespace

const char* role_name(Role role) {
  switch (role) {
    case Role::g: return "g";
    case Role::f: return "f";
    case Role::r1: return "r1";
    case Role::r2: return "r2";
  }
  return "?";
}

const char* mode_name(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::trs: return "trs";
    case TrainingMode::baseline: return "baseline";
    case TrainingMode::supervised: return "supervised";
  }
  return "?";
}

TrainingMode parse_mode(const std::string& text) {
  if (text == "trs") return TrainingMode::trs;
  if (text == "baseline") return TrainingMode::baseline;
  if (text == "supervised") return TrainingMode::supervised;
  throw ConfigError("unknown mode '" + text + "' (expected trs, baseline or supervised)");
}

const char* which_name(Which which) {
  switch (which) {
    case Which::g: return "g";
    case Which::f: return "f";
    case Which::r1: return "r1";
    case Which::r2: return "r2";
    case Which::mean_gf: return "mean_gf";
  }
  return "?";
}

Which parse_which(const std::string& text) {
  if (text == "g") return Which::g;
  if (text == "f") return Which::f;
  if (text == "r1") return Which::r1;
  if (text == "r2") return Which::r2;
  if (text == "mean_gf") return Which::mean_gf;
  throw ConfigError("unknown network '" + text + "' (expected g, f, r1, r2 or mean_gf)");
}

void TrainingConfig::validate() const {
  auto momentum_ok = [](double m) { return m > 0.0 && m < 1.0; };
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!momentum_ok(alpha) || !momentum_ok(beta) || !momentum_ok(eta))
    throw ConfigError("momenta must lie strictly inside (0, 1)");
  if (levels.count() == 0) throw ConfigError("levels must be nonempty");
  if (!levels.z) throw ConfigError("level z is required");
  if (ablation.mfl != levels.p) throw ConfigError("levels must be {z} exactly when mfl is off");
  if (k_mix < 0) throw ConfigError("k_mix must be nonnegative");
  if (km_patch_half < 0) throw ConfigError("km_patch_half must be nonnegative");
  if (batch_labeled < 1) throw ConfigError("batch_labeled must be at least 1");
  if (batch_unlabeled < 0) throw ConfigError("batch_unlabeled must be nonnegative");
  if (max_iterations < 0) throw ConfigError("max_iterations must be nonnegative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (log_interval < 1) throw ConfigError("log_interval must be at least 1");
  if (!(pck_threshold > 0.0)) throw ConfigError("pck_threshold must be positive");
  for (const AugmentRange* r : {&augment.easy, &augment.hard}) {
    if (r->max_rotation_deg < 0.0 || !(r->min_scale > 0.0) || r->max_scale < r->min_scale)
      throw ConfigError("invalid augmentation range");
  }
}

void TrainingConfig::set_mfl(bool on) {
  ablation.mfl = on;
  levels = on ? LevelSet::both() : LevelSet::z_only();
}

int TrainingConfig::patch_half(int heatmap_stride) const {
  if (km_patch_half > 0) return km_patch_half;
  return static_cast<int>(std::lround(2.0 * sigma * heatmap_stride));
}

double TrainingConfig::learning_rate_at(std::int64_t iteration) const {
  double lr = learning_rate;
  if (!lr_decay || max_iterations == 0) return lr;
  const double e = static_cast<double>(max_iterations);
  if (static_cast<double>(iteration) >= 0.7 * e) lr *= 0.1;
  if (static_cast<double>(iteration) >= 0.9 * e) lr *= 0.1;
  return lr;
}

template <typename T>
NetworkEnsemble<T> make_ensemble(const Network<T>& net, std::uint64_t seed) {
  NetworkEnsemble<T> e;
  e.g() = net.init(derive_seed(seed, 1));
  e.f() = net.init(derive_seed(seed, 2));
  e.r1() = e.g();
  e.r2() = e.f();
  return e;
}

template <typename T>
LossTerms<T> supervised_loss(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                             std::span<const Sample* const> batch, LevelSet levels, bool reviewers, double sigma) {
  check_ensemble(ensemble);
  if (batch.empty()) throw ConfigError("supervised_loss: empty batch");
  LossTerms<T> out;
  out.grads = zero_grads(ensemble);
  std::vector<Role> roles{Role::g, Role::f};
  if (reviewers) {
    roles.push_back(Role::r1);
    roles.push_back(Role::r2);
  }
  for (Role r : roles) {
    out.value += supervised_one(net, ensemble[r], r, batch, levels, sigma, out.grads[idx(r)], out.terms);
  }
  return out;
}

template <typename T>
DirectionBatch<T> make_direction_batch(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                                       std::span<const ViewPair<T>> views, std::span<const Role> teachers) {
  DirectionBatch<T> batch;
  batch.target_roles.assign(teachers.begin(), teachers.end());
  for (const ViewPair<T>& v : views) {
    if (v.easy.data.empty() || v.hard.data.empty()) throw ConfigError("consistency: missing view");
    std::vector<HeatmapStack<T>> targets;
    for (Role r : teachers) {
      const MultiLevelOutput<T> out = net.forward(ensemble[r], v.easy, LevelSet::z_only());
      targets.push_back(map_easy_to_hard(out.level_z, v.t_easy, v.t_hard));
    }
    batch.student_inputs.push_back(v.hard);
    batch.targets.push_back(std::move(targets));
  }
  return batch;
}

template <typename T>
LossTerms<T> student_consistency_loss(const Network<T>& net, const NetworkEnsemble<T>& ensemble, Role student,
                                      const DirectionBatch<T>& batch, LevelSet levels) {
  check_ensemble(ensemble);
  LossTerms<T> out;
  out.grads = zero_grads(ensemble);
  if (batch.student_inputs.empty()) return out;
  out.value = consistency_one(net, ensemble[student], student, batch, levels, out.grads[idx(student)], out.terms);
  return out;
}

template <typename T>
LossTerms<T> consistency_loss_1(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                                std::span<const ViewPair<T>> views, LevelSet levels, bool reviewers) {
  std::vector<Role> teachers{Role::g};
  if (reviewers) teachers.push_back(Role::r1);
  return student_consistency_loss(net, ensemble, Role::f, make_direction_batch(net, ensemble, views, teachers),
                                  levels);
}

template <typename T>
LossTerms<T> consistency_loss_2(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                                std::span<const ViewPair<T>> views, LevelSet levels, bool reviewers) {
  std::vector<Role> teachers{Role::f};
  if (reviewers) teachers.push_back(Role::r2);
  return student_consistency_loss(net, ensemble, Role::g, make_direction_batch(net, ensemble, views, teachers),
                                  levels);
}

template <typename T>
ParameterSet<T> ema_update(const ParameterSet<T>& target, const ParameterSet<T>& source, double momentum) {
  if (!target.compatible(source) || target.size() != source.size())
    throw ShapeError("ema_update: fingerprint mismatch");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("ema_update: momentum must lie in (0, 1)");
  ParameterSet<T> out = target;
  const T m = static_cast<T>(momentum);
  const T rest = static_cast<T>(1.0 - momentum);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = m * target.values[i] + rest * source.values[i];
  return out;
}

template <typename T>
StepViews<T> build_step_views(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                              std::span<const Sample* const> unlabeled, const TrainingConfig& config, Rng& rng,
                              DirectionBatch<T>* batch_for_f, DirectionBatch<T>* batch_for_g) {
  check_ensemble(ensemble);
  const bool reviewers = reviewers_active(config);
  std::vector<std::pair<Role, const ParameterSet<T>*>> teach_f{{Role::g, &ensemble.g()}};
  std::vector<std::pair<Role, const ParameterSet<T>*>> teach_g{{Role::f, &ensemble.f()}};
  if (reviewers) {
    teach_f.emplace_back(Role::r1, &ensemble.r1());
    teach_g.emplace_back(Role::r2, &ensemble.r2());
  }
  StepViews<T> views;
  Rng rng_f = rng.split(1);
  Rng rng_g = rng.split(2);
  build_direction<T>(net, unlabeled, teach_f, config, rng_f, views.for_f, views.mix_for_f, batch_for_f);
  build_direction<T>(net, unlabeled, teach_g, config, rng_g, views.for_g, views.mix_for_g, batch_for_g);
  rng.next_u64();
  return views;
}

template <typename T>
TotalLoss<T> total_loss(const Network<T>& net, const NetworkEnsemble<T>& ensemble,
                        std::span<const Sample* const> labeled, const DirectionBatch<T>& batch_for_f,
                        const DirectionBatch<T>& batch_for_g, const TrainingConfig& config) {
  TotalLoss<T> out;
  const bool reviewer_sup = reviewers_active(config) && config.reviewer_grad;
  out.sup = supervised_loss(net, ensemble, labeled, config.levels, reviewer_sup, config.sigma);
  out.un1 = student_consistency_loss(net, ensemble, Role::f, batch_for_f, config.levels);
  out.un2 = student_consistency_loss(net, ensemble, Role::g, batch_for_g, config.levels);
  const T lambda = static_cast<T>(config.lambda);
  out.total = lambda * out.sup.value + out.un1.value + out.un2.value;
  for (Role r : kAllRoles) {
    ParameterSet<T> g = out.sup.grads[idx(r)];
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      g.values[i] = lambda * g.values[i] + out.un1.grads[idx(r)].values[i] + out.un2.grads[idx(r)].values[i];
    }
    out.grads[idx(r)] = std::move(g);
  }
  return out;
}

template <typename T>
StepResult<T> train_step(const Network<T>& net, const TrainState<T>& state, std::span<const Sample* const> labeled,
                         std::span<const Sample* const> unlabeled, const TrainingConfig& config) {
  config.validate();
  if (config.mode == TrainingMode::baseline) throw ConfigError("train_step: use baseline_mean_teacher_step");
  const NetworkEnsemble<T>& before = state.ensemble;
  const std::int64_t it = before.iteration;
  Rng rng = step_rng(config, it);

  DirectionBatch<T> for_f;
  DirectionBatch<T> for_g;
  if (config.mode == TrainingMode::trs && !unlabeled.empty()) {
    build_step_views(net, before, unlabeled, config, rng, &for_f, &for_g);
  }
  const TotalLoss<T> loss = total_loss(net, before, labeled, for_f, for_g, config);

  StepReport report;
  report.iteration = it;
  report.loss_sup = static_cast<double>(loss.sup.value);
  report.loss_un1 = static_cast<double>(loss.un1.value);
  report.loss_un2 = static_cast<double>(loss.un2.value);
  report.loss_total = static_cast<double>(loss.total);
  report.learning_rate = config.learning_rate_at(it);
  report.terms = loss.sup.terms;
  report.terms.insert(report.terms.end(), loss.un1.terms.begin(), loss.un1.terms.end());
  report.terms.insert(report.terms.end(), loss.un2.terms.begin(), loss.un2.terms.end());
  if (!std::isfinite(report.loss_total)) throw TrainingAborted(report);

  StepResult<T> result;
  result.state = state;
  NetworkEnsemble<T>& e = result.state.ensemble;
  const bool reviewers = reviewers_active(config);
  std::vector<Role> trained{Role::g, Role::f};
  if (reviewers && config.reviewer_grad) {
    trained.push_back(Role::r1);
    trained.push_back(Role::r2);
  }
  for (Role r : trained) {
    e[r] = optimizer_step(before[r], loss.grads[idx(r)], config, report.learning_rate, result.state.adam[idx(r)]);
  }
  result.post_gradient = e;
  if (reviewers) {
    ParameterSet<T> r1 = ema_update(e.r1(), e.g(), config.alpha);
    ParameterSet<T> r2 = ema_update(e.r2(), e.f(), config.beta);
    report.reviewer_ema_gap = {l2_distance(r1, e.r1()), l2_distance(r2, e.r2())};
    e.r1() = std::move(r1);
    e.r2() = std::move(r2);
  }
  for (Role r : kAllRoles) report.change_norm[idx(r)] = l2_distance(e[r], before[r]);
  e.iteration = it + 1;
  result.report = std::move(report);
  return result;
}

template <typename T>
BaselineResult<T> baseline_mean_teacher_step(const Network<T>& net, const ParameterSet<T>& teacher,
                                             const ParameterSet<T>& student, const AdamState<T>& student_adam,
                                             std::span<const Sample* const> labeled,
                                             std::span<const Sample* const> unlabeled, const TrainingConfig& config,
                                             std::int64_t iteration) {
  config.validate();
  if (!teacher.compatible(student)) throw ShapeError("baseline: fingerprint mismatch");
  if (labeled.empty()) throw ConfigError("baseline: empty labeled batch");
  Rng rng = step_rng(config, iteration);

  StepReport report;
  report.iteration = iteration;
  ParameterSet<T> grads;
  const T sup = supervised_one(net, student, Role::g, labeled, config.levels, config.sigma, grads, report.terms);
  T un = T(0);
  if (!unlabeled.empty()) {
    std::vector<std::pair<Role, const ParameterSet<T>*>> teachers{{Role::f, &teacher}};
    std::vector<ViewPair<T>> views;
    std::vector<KeypointMixResult> mixes;
    DirectionBatch<T> batch;
    Rng dir_rng = rng.split(2);
    build_direction<T>(net, unlabeled, teachers, config, dir_rng, views, mixes, &batch);
    ParameterSet<T> un_grads;
    un = consistency_one(net, student, Role::g, batch, config.levels, un_grads, report.terms);
    const T lambda = static_cast<T>(config.lambda);
    for (std::size_t i = 0; i < grads.values.size(); ++i) grads.values[i] = lambda * grads.values[i] + un_grads.values[i];
  } else {
    const T lambda = static_cast<T>(config.lambda);
    for (auto& v : grads.values) v *= lambda;
  }
  report.loss_sup = static_cast<double>(sup);
  report.loss_un2 = static_cast<double>(un);
  report.loss_total = static_cast<double>(static_cast<T>(config.lambda) * sup + un);
  report.learning_rate = config.learning_rate_at(iteration);
  if (!std::isfinite(report.loss_total)) throw TrainingAborted(report);

  BaselineResult<T> out;
  out.student_adam = student_adam;
  out.student = optimizer_step(student, grads, config, report.learning_rate, out.student_adam);
  out.teacher = ema_update(teacher, out.student, config.eta);
  report.change_norm[idx(Role::g)] = l2_distance(out.student, student);
  report.change_norm[idx(Role::f)] = l2_distance(out.teacher, teacher);
  out.report = std::move(report);
  return out;
}

namespace {

template <typename T>
PckReport evaluate_one(const Network<T>& net, const ParameterSet<T>& params, std::span<const Sample> dataset,
                       double threshold, const PckReference& reference) {
  std::vector<Pose> preds;
  std::vector<Pose> truth;
  preds.reserve(dataset.size());
  truth.reserve(dataset.size());
  for (const Sample& s : dataset) {
    if (!s.pose) throw ConfigError("evaluate: sample " + std::to_string(s.id) + " has no pose");
    preds.push_back(decode(net.forward(params, as_grid<T>(s.image), LevelSet::z_only()).level_z));
    truth.push_back(*s.pose);
  }
  return pck(preds, truth, threshold, reference);
}

}  // namespace

template <typename T>
PckReport evaluate(const Network<T>& net, const NetworkEnsemble<T>& ensemble, std::span<const Sample> dataset,
                   Which which, double threshold, const PckReference& reference) {
  if (dataset.empty()) throw ConfigError("evaluate: empty dataset");
  switch (which) {
    case Which::g: return evaluate_one(net, ensemble.g(), dataset, threshold, reference);
    case Which::f: return evaluate_one(net, ensemble.f(), dataset, threshold, reference);
    case Which::r1: return evaluate_one(net, ensemble.r1(), dataset, threshold, reference);
    case Which::r2: return evaluate_one(net, ensemble.r2(), dataset, threshold, reference);
    case Which::mean_gf: break;
  }
  const PckReport g = evaluate_one(net, ensemble.g(), dataset, threshold, reference);
  const PckReport f = evaluate_one(net, ensemble.f(), dataset, threshold, reference);
  PckReport out = g;
  out.total = (g.total + f.total) / 2.0;
  for (std::size_t j = 0; j < out.per_joint.size(); ++j) out.per_joint[j] = (g.per_joint[j] + f.per_joint[j]) / 2.0;
  return out;
}

std::string metrics_csv_header() {
  return "iteration,loss_sup,loss_un1,loss_un2,loss_total,pck_g,pck_f,pck_mean,pck_r1,pck_r2,wall_ms";
}

std::string metrics_csv_line(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f",
                static_cast<long long>(r.iteration), r.loss_sup, r.loss_un1, r.loss_un2, r.loss_total, r.pck_g,
                r.pck_f, r.pck_mean, r.pck_r1, r.pck_r2, r.wall_ms);
  return buf;
}

std::vector<std::size_t> batch_indices(std::uint64_t stream_seed, std::size_t size, std::int64_t iteration,
                                       int batch) {
  std::vector<std::size_t> out;
  if (size == 0 || batch <= 0) return out;
  std::vector<std::size_t> perm;
  std::uint64_t perm_epoch = ~std::uint64_t{0};
  for (int i = 0; i < batch; ++i) {
    const std::uint64_t q = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(batch) +
                            static_cast<std::uint64_t>(i);
    const std::uint64_t epoch = q / size;
    if (epoch != perm_epoch) {
      perm.resize(size);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(derive_seed(stream_seed, epoch));
      for (std::size_t k = size - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
      perm_epoch = epoch;
    }
    out.push_back(perm[q % size]);
  }
  return out;
}

template <typename T>
TrainResult<T> train(const Network<T>& net, const DatasetSplit& split, std::span<const Sample> validation,
                     const TrainingConfig& config, const PckReference& reference,
                     std::optional<TrainState<T>> resume, const TrainHooks<T>& hooks) {
  config.validate();
  if (split.labeled.empty()) throw ConfigError("need at least one labeled sample");
  const DenormalGuard denormals;
  TrainResult<T> result;
  result.state = resume ? std::move(*resume) : TrainState<T>{make_ensemble(net, config.seed), {}};
  TrainState<T>& state = result.state;
  check_ensemble(state.ensemble);
  if (!state.ensemble.g().compatible(net.init(0))) throw ShapeError("train: ensemble does not match architecture");

  const std::uint64_t lab_stream = derive_seed(config.seed, kLabeledStream);
  const std::uint64_t unl_stream = derive_seed(config.seed, kUnlabeledStream);
  const bool use_unlabeled = config.mode != TrainingMode::supervised;

  double sum_sup = 0.0, sum_un1 = 0.0, sum_un2 = 0.0, sum_total = 0.0;
  int steps = 0;
  auto t0 = std::chrono::steady_clock::now();

  auto log_row = [&](std::int64_t iteration) {
    MetricsRow row;
    row.iteration = iteration;
    const double n = steps > 0 ? steps : 1;
    row.loss_sup = sum_sup / n;
    row.loss_un1 = sum_un1 / n;
    row.loss_un2 = sum_un2 / n;
    row.loss_total = sum_total / n;
    if (!validation.empty()) {
      const double thr = config.pck_threshold;
      row.pck_g = evaluate(net, state.ensemble, validation, Which::g, thr, reference).total;
      row.pck_f = evaluate(net, state.ensemble, validation, Which::f, thr, reference).total;
      row.pck_mean = (row.pck_g + row.pck_f) / 2.0;
      row.pck_r1 = evaluate(net, state.ensemble, validation, Which::r1, thr, reference).total;
      row.pck_r2 = evaluate(net, state.ensemble, validation, Which::r2, thr, reference).total;
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.history.push_back(row);
    if (hooks.on_metrics) hooks.on_metrics(row);
    sum_sup = sum_un1 = sum_un2 = sum_total = 0.0;
    steps = 0;
    t0 = std::chrono::steady_clock::now();
  };

  std::vector<const Sample*> lab;
  std::vector<const Sample*> unl;
  while (state.ensemble.iteration < config.max_iterations) {
    const std::int64_t it = state.ensemble.iteration;
    lab.clear();
    unl.clear();
    for (std::size_t i : batch_indices(lab_stream, split.labeled.size(), it, config.batch_labeled))
      lab.push_back(&split.labeled[i]);
    if (use_unlabeled) {
      for (std::size_t i : batch_indices(unl_stream, split.unlabeled.size(), it, config.batch_unlabeled))
        unl.push_back(&split.unlabeled[i]);
    }
    StepReport report;
    try {
      if (config.mode == TrainingMode::baseline) {
        NetworkEnsemble<T>& e = state.ensemble;
        BaselineResult<T> b =
            baseline_mean_teacher_step(net, e.f(), e.g(), state.adam[0], lab, unl, config, it);
        e.g() = std::move(b.student);
        e.f() = std::move(b.teacher);
        e.r1() = e.g();
        e.r2() = e.f();
        e.iteration = it + 1;
        state.adam[0] = std::move(b.student_adam);
        report = std::move(b.report);
      } else {
        StepResult<T> step = train_step(net, state, lab, unl, config);
        state = std::move(step.state);
        report = std::move(step.report);
      }
    } catch (const TrainingAborted&) {
      if (hooks.on_abort) hooks.on_abort(state);
      throw;
    }
    sum_sup += report.loss_sup;
    sum_un1 += report.loss_un1;
    sum_un2 += report.loss_un2;
    sum_total += report.loss_total;
    ++steps;
    const std::int64_t done = state.ensemble.iteration;
    if (done % config.log_interval == 0 || done == config.max_iterations) log_row(done);
    if (hooks.on_checkpoint && hooks.checkpoint_interval > 0 && done % hooks.checkpoint_interval == 0 &&
        done != config.max_iterations) {
      hooks.on_checkpoint(state);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  return result;
}

#define TRS_INSTANTIATE(T)                                                                                         \
  template NetworkEnsemble<T> make_ensemble<T>(const Network<T>&, std::uint64_t);                                 \
  template LossTerms<T> supervised_loss<T>(const Network<T>&, const NetworkEnsemble<T>&,                          \
                                           std::span<const Sample* const>, LevelSet, bool, double);               \
  template DirectionBatch<T> make_direction_batch<T>(const Network<T>&, const NetworkEnsemble<T>&,                \
                                                     std::span<const ViewPair<T>>, std::span<const Role>);        \
  template LossTerms<T> student_consistency_loss<T>(const Network<T>&, const NetworkEnsemble<T>&, Role,           \
                                                    const DirectionBatch<T>&, LevelSet);                          \
  template LossTerms<T> consistency_loss_1<T>(const Network<T>&, const NetworkEnsemble<T>&,                       \
                                              std::span<const ViewPair<T>>, LevelSet, bool);                      \
  template LossTerms<T> consistency_loss_2<T>(const Network<T>&, const NetworkEnsemble<T>&,                       \
                                              std::span<const ViewPair<T>>, LevelSet, bool);                      \
  template ParameterSet<T> ema_update<T>(const ParameterSet<T>&, const ParameterSet<T>&, double);                 \
  template StepViews<T> build_step_views<T>(const Network<T>&, const NetworkEnsemble<T>&,                         \
                                            std::span<const Sample* const>, const TrainingConfig&, Rng&,          \
                                            DirectionBatch<T>*, DirectionBatch<T>*);                              \
  template TotalLoss<T> total_loss<T>(const Network<T>&, const NetworkEnsemble<T>&,                               \
                                      std::span<const Sample* const>, const DirectionBatch<T>&,                   \
                                      const DirectionBatch<T>&, const TrainingConfig&);                           \
  template StepResult<T> train_step<T>(const Network<T>&, const TrainState<T>&, std::span<const Sample* const>,   \
                                       std::span<const Sample* const>, const TrainingConfig&);                    \
  template BaselineResult<T> baseline_mean_teacher_step<T>(                                                      \
      const Network<T>&, const ParameterSet<T>&, const ParameterSet<T>&, const AdamState<T>&,                     \
      std::span<const Sample* const>, std::span<const Sample* const>, const TrainingConfig&, std::int64_t);       \
  template PckReport evaluate<T>(const Network<T>&, const NetworkEnsemble<T>&, std::span<const Sample>, Which,    \
                                 double, const PckReference&);                                                    \
  template TrainResult<T> train<T>(const Network<T>&, const DatasetSplit&, std::span<const Sample>,               \
                                   const TrainingConfig&, const PckReference&, std::optional<TrainState<T>>,      \
                                   const TrainHooks<T>&);

TRS_INSTANTIATE(float)
TRS_INSTANTIATE(double)

#undef TRS_INSTANTIATE

}  // namespace trs
