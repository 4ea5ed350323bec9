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

#include <fstream>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "trs/checkpoint.hpp"
#include "trs/config.hpp"

using namespace trs;

TEST_CASE("defaults are documented and valid") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.training.lambda == 0.5);
  CHECK(c.training.k_mix == 5);
  const std::vector<ConfigKey> keys = config_keys();
  std::set<std::string> names;
  for (const ConfigKey& k : keys) {
    CHECK_FALSE(k.help.empty());
    CHECK(names.insert(k.name).second);
  }
  CHECK(names.count("train.lambda"));
  CHECK(names.count("arch.channels"));
  CHECK(names.count("run.checkpoint_interval"));
}

TEST_CASE("parse_run_config reads sections, comments and lists") {
  const RunConfig c = parse_run_config(
      "# comment\n"
      "[train]\n"
      "lambda = 0.25\n"
      "mfl = off\n"
      "optimizer = sgd\n"
      "mode = baseline\n"
      "\n"
      "[arch]\n"
      "channels = 4, 8\n"
      "[data]\n"
      "labeled = 12\n");
  CHECK(c.training.lambda == 0.25);
  CHECK_FALSE(c.training.ablation.mfl);
  CHECK(c.training.levels == LevelSet::z_only());
  CHECK(c.training.optimizer == OptimizerKind::sgd);
  CHECK(c.training.mode == TrainingMode::baseline);
  CHECK(c.arch.channels == std::vector<int>{4, 8});
  CHECK(c.n_labeled == 12);
}

TEST_CASE("unknown keys and bad values are hard errors with line numbers") {
  CHECK_THROWS_AS(parse_run_config("[train]\nlamda = 0.5\n"), ConfigError);
  CHECK_THROWS_WITH(parse_run_config("[train]\n\nk_mix = five\n"), doctest::Contains("line 3"));
  CHECK_THROWS_AS(parse_run_config("lambda = 0.5\n"), ConfigError);
  RunConfig c;
  CHECK_THROWS_AS(set_config_value(c, "train.nope", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "train.km", "maybe"), ConfigError);
  set_config_value(c, "train.reviewer", "off");
  CHECK_FALSE(c.training.ablation.reviewer);
  CHECK_THROWS_AS(load_run_config("/nonexistent/trs.conf"), LoadError);
}

TEST_CASE("config round trips through text and json") {
  RunConfig c;
  c.training.alpha = 0.99;
  c.training.seed = 1234567890123ULL;
  c.training.set_mfl(false);
  c.training.augment.hard.max_rotation_deg = 12.5;
  c.arch.channels = {8, 8, 16};
  c.data_dir = "some dir/x";
  c.checkpoint_interval = 50;
  CHECK(parse_run_config(to_config_text(c)) == c);
  CHECK(run_config_from_json(to_json(c)) == c);
  CHECK(arch_from_json(arch_to_json(c.arch)) == c.arch);
  for (const ConfigKey& k : config_keys()) {
    RunConfig d = c;
    CHECK_NOTHROW(set_config_value(d, k.name, k.default_text));
  }
}

TEST_CASE("checkpoint round trip") {
  const test::TempDir dir("ckpt");
  const ArchConfig arch = test::micro_arch();
  const Network<float> net(arch);
  Checkpoint ck;
  ck.arch = arch;
  ck.state.ensemble = make_ensemble(net, 5);
  ck.state.ensemble.r2() = net.init(99);
  ck.state.ensemble.iteration = 17;
  ck.state.adam[0].m.assign(ck.state.ensemble.g().size(), 0.25f);
  ck.state.adam[0].v.assign(ck.state.ensemble.g().size(), 0.5f);
  ck.state.adam[0].step = 17;
  ck.run_config = to_json(RunConfig{});
  ck.version = version_string();
  const auto path = dir.path() / "a.trsc";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.arch == arch);
  CHECK(back.state == ck.state);
  CHECK(back.run_config == ck.run_config);
  CHECK(back.version == ck.version);
  CHECK_FALSE(std::filesystem::exists(dir.path() / "a.trsc.tmp"));
}

TEST_CASE("checkpoint load errors") {
  const test::TempDir dir("ckpt_err");
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.trsc"), LoadError);
  {
    std::ofstream f(dir.path() / "junk.trsc", std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "junk.trsc"), LoadError);

  const Network<float> net(test::micro_arch());
  Checkpoint ck;
  ck.arch = test::micro_arch();
  ck.state.ensemble = make_ensemble(net, 1);
  save_checkpoint(dir.path() / "ok.trsc", ck);
  const auto size = std::filesystem::file_size(dir.path() / "ok.trsc");
  std::filesystem::copy_file(dir.path() / "ok.trsc", dir.path() / "cut.trsc");
  std::filesystem::resize_file(dir.path() / "cut.trsc", size - 16);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "cut.trsc"), LoadError);
}
