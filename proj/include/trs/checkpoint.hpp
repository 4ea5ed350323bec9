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

#include "json.hpp"
#include "trs/model.hpp"
#include "trs/trainer.hpp"

namespace trs {

// File layout:
//   8 bytes   magic "TRSCKPT\0"
//   u32 LE    format version
//   u64 LE    header length in bytes
//   header    UTF-8 JSON: arch, fingerprint, iteration, run config, rng
//             streams, tensor table {name, shape, offset, count}
//   payload   little-endian float32 values, offsets in elements

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ArchConfig arch;
  TrainState<float> state;
  /// Echo of the RunConfig that produced the state.
  nlohmann::json run_config = nlohmann::json::object();
  std::string version;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws LoadError on a missing, truncated or inconsistent file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trs
