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
#include <string>
#include <vector>

#include "json.hpp"
#include "trs/datagen.hpp"
#include "trs/model.hpp"
#include "trs/trainer.hpp"

namespace trs {

/// Version string baked in at configure time ("<semver>-<git describe>").
const char* version_string();

/// Everything a run needs. Config files use `[section]` headers and
/// `key = value` lines; keys are addressed as "section.key".
struct RunConfig {
  TrainingConfig training;
  ArchConfig arch;

  /// Dataset directory written by gen-data or a COCO-style subset. Empty
  /// means the synthetic split is generated in memory from data_seed.
  std::string data_dir;
  /// Optional labeled validation index directory; empty selects the
  /// synthetic held-out slice.
  std::string validation_dir;
  std::uint64_t data_seed = 0;
  int n_labeled = 200;
  int n_unlabeled = 2000;
  int n_validation = 200;

  std::string out_dir = "run";
  /// Iterations between checkpoints; 0 writes only at exit.
  std::int64_t checkpoint_interval = 0;

  void validate() const;
  SkeletonConfig skeleton() const;
  PckReference pck_reference() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ConfigKey {
  std::string name;
  std::string help;
  /// Current value rendered as config-file text.
  std::string default_text;
};

/// Every accepted key with its documentation and default value.
std::vector<ConfigKey> config_keys();

/// Sets one key from its textual value. Unknown keys and malformed values
/// throw ConfigError.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Parses config text on top of `base`. Errors carry the line number.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Config-file rendering that parse_run_config reads back to an equal value.
std::string to_config_text(const RunConfig& config);

nlohmann::json arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const nlohmann::json& j);

nlohmann::json pck_to_json(const PckReport& report);

}  // namespace trs
