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

#include <cmath>

#include "doctest.h"
#include "test_support.hpp"
#include "trs/model.hpp"

using namespace trs;

namespace {

Grid<double> to_double(const Image& img) {
  Grid<double> g(img.channels, img.height, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) g.data[i] = img.data[i];
  return g;
}

// Weighted sum of both levels; the weights fix a random linear functional.
struct Probe {
  Grid<double> wz, wp;

  double operator()(GradientTape<double>& tape, const Grid<double>& image) const {
    const std::size_t h = tape.forward(image);
    const MultiLevelOutput<double>& out = tape.output(h);
    double loss = 0;
    for (std::size_t i = 0; i < wz.data.size(); ++i) loss += wz.data[i] * out.level_z.values.data[i];
    for (std::size_t i = 0; i < wp.data.size(); ++i) loss += wp.data[i] * out.level_p.values.data[i];
    tape.backward(h, &wz, &wp);
    return loss;
  }
};

Probe make_probe(Rng& rng, const ArchConfig& arch) {
  Probe p{Grid<double>(arch.joints, arch.heatmap_height(), arch.heatmap_width()),
          Grid<double>(arch.joints, arch.heatmap_height(), arch.heatmap_width())};
  for (double& v : p.wz.data) v = rng.uniform(-1, 1);
  for (double& v : p.wp.data) v = rng.uniform(-1, 1);
  return p;
}

}  // namespace

TEST_CASE("init is deterministic and the fingerprint tracks structure") {
  const ArchConfig arch;
  const Network<float> net(arch);
  const ParameterSet<float> a = net.init(7);
  CHECK(a == net.init(7));
  CHECK_FALSE(a == net.init(8));
  CHECK(value_hash(a) == value_hash(net.init(7)));
  CHECK(value_hash(a) != value_hash(net.init(8)));
  CHECK(a.fingerprint() == net.init(8).fingerprint());
  ArchConfig other = arch;
  other.head_channels = 8;
  CHECK(Network<float>(other).init(7).fingerprint() != a.fingerprint());
  CHECK(a.all_finite());
}

TEST_CASE("output biases start at the prior logit") {
  const ArchConfig arch = test::micro_arch();
  const Network<double> net(arch);
  const ParameterSet<double> params = net.init(1);
  int found = 0;
  for (const TensorInfo& t : params.layout->tensors) {
    if (t.name.find(".bias") == std::string::npos) continue;
    if (t.shape.front() != arch.joints) continue;
    for (std::size_t i = 0; i < t.size; ++i) CHECK(params.values[t.offset + i] == kOutputPriorLogit);
    ++found;
  }
  CHECK(found == 2);
}

TEST_CASE("architecture validation") {
  ArchConfig a = test::micro_arch();
  a.channels = {4};
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a = test::micro_arch();
  a.heatmap_stride = 3;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  CHECK_NOTHROW(test::micro_arch().validate());
}

TEST_CASE("outputs are heatmaps in [0, 1] with the expected shape") {
  const ArchConfig arch;
  const Network<float> net(arch);
  const ParameterSet<float> params = net.init(3);
  Rng rng(3);
  const MultiLevelOutput<float> out = net.forward(params, test::random_image(rng, 64, 64));
  for (const HeatmapStack<float>* s : {&out.level_z, &out.level_p}) {
    CHECK(s->values.channels == 7);
    CHECK(s->values.height == 32);
    CHECK(s->values.width == 32);
    CHECK(s->stride == 2);
    for (float v : s->values.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  const MultiLevelOutput<float> z_only = net.forward(params, test::random_image(rng, 64, 64), LevelSet::z_only());
  CHECK(z_only.level_p.values.data.empty());
}

TEST_CASE("zero parameters emit logistic(0) everywhere") {
  const ArchConfig arch = test::micro_arch();
  const Network<double> net(arch);
  ParameterSet<double> params = net.init(0).zeros_like();
  Rng rng(0);
  const MultiLevelOutput<double> out = net.forward(params, to_double(test::random_image(rng, 16, 16)));
  for (double v : out.level_z.values.data) CHECK(v == 0.5);
  for (double v : out.level_p.values.data) CHECK(v == 0.5);
}

TEST_CASE("forward is deterministic and rejects mismatched inputs") {
  const ArchConfig arch = test::micro_arch();
  const Network<float> net(arch);
  const ParameterSet<float> params = net.init(4);
  Rng rng(4);
  const Image img = test::random_image(rng, 16, 16);
  CHECK(net.forward(params, img).level_z.values == net.forward(params, img).level_z.values);
  CHECK_THROWS_AS(net.forward(params, test::random_image(rng, 32, 32)), ShapeError);
  const ParameterSet<float> big = Network<float>(ArchConfig{}).init(0);
  CHECK_THROWS_AS(net.forward(big, img), ShapeError);
}

TEST_CASE("backward matches central finite differences") {
  const ArchConfig arch = test::micro_arch();
  const Network<double> net(arch);
  ParameterSet<double> params = net.init(5);
  Rng rng(5);
  test::jitter_biases(params, rng, 0.1);
  const Grid<double> image = to_double(test::random_image(rng, 16, 16));
  const Probe probe = make_probe(rng, arch);
  const LossGradient<double> lg =
      loss_gradient(net, params, [&](GradientTape<double>& tape) { return probe(tape, image); });
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParameterSet<double> plus = params, minus = params;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double lp = loss_gradient(net, plus, [&](GradientTape<double>& t) { return probe(t, image); }).loss;
    const double lm = loss_gradient(net, minus, [&](GradientTape<double>& t) { return probe(t, image); }).loss;
    const double fd = (lp - lm) / (2 * h);
    const double an = lg.grads.values[i];
    CHECK(std::abs(fd - an) <= 1e-5 * std::max({1.0, std::abs(fd), std::abs(an)}));
    ++checked;
  }
  CHECK(checked == static_cast<int>(params.size()));
}

TEST_CASE("gradients accumulate linearly across recorded passes") {
  const ArchConfig arch = test::micro_arch();
  const Network<double> net(arch);
  const ParameterSet<double> params = net.init(6);
  Rng rng(6);
  const Grid<double> image = to_double(test::random_image(rng, 16, 16));
  const Probe probe = make_probe(rng, arch);
  const LossGradient<double> once =
      loss_gradient(net, params, [&](GradientTape<double>& tape) { return probe(tape, image); });
  Probe scaled = probe;
  for (double& v : scaled.wz.data) v *= 0.5;
  for (double& v : scaled.wp.data) v *= 0.5;
  const LossGradient<double> halves = loss_gradient(net, params, [&](GradientTape<double>& tape) {
    return scaled(tape, image) + scaled(tape, image);
  });
  CHECK(halves.loss == doctest::Approx(once.loss).epsilon(1e-12));
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(halves.grads.values[i] == doctest::Approx(once.grads.values[i]).epsilon(1e-10).scale(1e-12));
}

TEST_CASE("non-finite losses are reported") {
  const Network<double> net(test::micro_arch());
  const ParameterSet<double> params = net.init(0);
  CHECK_THROWS_AS(loss_gradient(net, params, [](GradientTape<double>&) { return std::nan(""); }), NonFiniteLoss);
}

TEST_CASE("sgd and adam arithmetic") {
  const Network<double> net(test::micro_arch());
  ParameterSet<double> params = net.init(0);
  ParameterSet<double> grads = params.zeros_like();
  for (std::size_t i = 0; i < grads.size(); ++i) grads.values[i] = (i % 3 == 0) ? 2.0 : -0.5;

  const ParameterSet<double> sgd = apply_sgd_step(params, grads, 0.1);
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(sgd.values[i] == params.values[i] - 0.1 * grads.values[i]);

  AdamState<double> state;
  const ParameterSet<double> a1 = apply_adam_step(params, grads, 0.01, state);
  CHECK(state.step == 1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    // First bias-corrected step moves by lr * g / (|g| + eps).
    const double g = grads.values[i];
    CHECK(a1.values[i] == doctest::Approx(params.values[i] - 0.01 * g / (std::abs(g) + kAdamEpsilon)).epsilon(1e-12));
  }
  const ParameterSet<double> a2 = apply_adam_step(a1, grads, 0.01, state);
  CHECK(state.step == 2);
  const double g = grads.values[0];
  const double m = (1 - kAdamBeta1) * g * (1 + kAdamBeta1) / (1 - kAdamBeta1 * kAdamBeta1);
  const double v = (1 - kAdamBeta2) * g * g * (1 + kAdamBeta2) / (1 - kAdamBeta2 * kAdamBeta2);
  CHECK(a2.values[0] == doctest::Approx(a1.values[0] - 0.01 * m / (std::sqrt(v) + kAdamEpsilon)).epsilon(1e-12));
}
