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

#include "trs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trs/config.hpp"

namespace trs {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'R', 'S', 'C', 'K', 'P', 'T', '\0'};

static_assert(sizeof(float) == 4);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_floats(std::string& out, const std::vector<float>& values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> get_floats(const std::string& payload, std::size_t offset, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload, 4 * (offset + i), 4)));
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const Network<float> net(ckpt.arch);
  const ParameterLayout& layout = *net.layout();
  json tensors = json::array();
  std::string payload;
  std::size_t offset = 0;
  auto add = [&](const std::string& name, const std::vector<int>& shape, const std::vector<float>& values) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", values.size()}});
    put_floats(payload, values);
    offset += values.size();
  };
  for (Role r : kAllRoles) {
    const ParameterSet<float>& p = ckpt.state.ensemble[r];
    if (p.layout->fingerprint != layout.fingerprint) throw ShapeError("checkpoint: ensemble does not match arch");
    for (const TensorInfo& t : layout.tensors) {
      add(std::string(role_name(r)) + "/" + t.name, t.shape,
          std::vector<float>(p.values.begin() + static_cast<std::ptrdiff_t>(t.offset),
                             p.values.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size)));
    }
  }
  json adam_steps = json::array();
  for (Role r : kAllRoles) {
    const AdamState<float>& a = ckpt.state.adam[static_cast<std::size_t>(r)];
    adam_steps.push_back(a.step);
    if (a.m.empty()) continue;
    const int n = static_cast<int>(a.m.size());
    add(std::string("adam.") + role_name(r) + ".m", {n}, a.m);
    add(std::string("adam.") + role_name(r) + ".v", {n}, a.v);
  }
  const std::uint64_t seed = ckpt.run_config.contains("train.seed") ? ckpt.run_config["train.seed"].get<std::uint64_t>()
                                                                     : std::uint64_t{0};
  const json header = {
      {"format", "trspose-checkpoint"},
      {"version_string", ckpt.version.empty() ? version_string() : ckpt.version},
      {"arch", arch_to_json(ckpt.arch)},
      {"fingerprint", layout.fingerprint},
      {"iteration", ckpt.state.ensemble.iteration},
      {"rng", {{"kind", "counter"}, {"seed", seed}, {"note", "step streams derive from (seed, iteration)"}}},
      {"adam_steps", adam_steps},
      {"run_config", ckpt.run_config},
      {"tensors", tensors},
  };
  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, header_text.size());
  out += header_text;
  out += payload;

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  if (data.size() < 20 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    throw LoadError("not a checkpoint file: " + path.string());
  const auto version = static_cast<std::uint32_t>(get_le(data, 8, 4));
  if (version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  const std::uint64_t header_len = get_le(data, 12, 8);
  if (header_len > data.size() - 20) throw LoadError("truncated checkpoint header: " + path.string());
  json header;
  try {
    header = json::parse(data.substr(20, header_len));
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("corrupt checkpoint header: ") + e.what());
  }
  const std::string payload = data.substr(20 + header_len);

  Checkpoint ckpt;
  try {
    ckpt.arch = arch_from_json(header.at("arch"));
    const Network<float> net(ckpt.arch);
    const auto& layout = net.layout();
    if (header.at("fingerprint").get<std::string>() != layout->fingerprint)
      throw LoadError("checkpoint fingerprint does not match its architecture: " + path.string());
    ckpt.version = header.at("version_string").get<std::string>();
    ckpt.run_config = header.at("run_config");
    auto tensor = [&](const std::string& name) -> std::vector<float> {
      for (const json& t : header.at("tensors")) {
        if (t.at("name").get<std::string>() != name) continue;
        const auto off = t.at("offset").get<std::size_t>();
        const auto count = t.at("count").get<std::size_t>();
        if ((off + count) * 4 > payload.size()) throw LoadError("truncated checkpoint payload: " + path.string());
        return get_floats(payload, off, count);
      }
      throw LoadError("checkpoint lacks tensor " + name);
    };
    for (Role r : kAllRoles) {
      ParameterSet<float> p{layout, std::vector<float>(layout->total)};
      for (const TensorInfo& t : layout->tensors) {
        const std::vector<float> v = tensor(std::string(role_name(r)) + "/" + t.name);
        if (v.size() != t.size) throw LoadError("tensor size mismatch for " + t.name);
        std::copy(v.begin(), v.end(), p.values.begin() + static_cast<std::ptrdiff_t>(t.offset));
      }
      ckpt.state.ensemble[r] = std::move(p);
    }
    ckpt.state.ensemble.iteration = header.at("iteration").get<std::int64_t>();
    const json& steps = header.at("adam_steps");
    for (Role r : kAllRoles) {
      const auto i = static_cast<std::size_t>(r);
      AdamState<float>& a = ckpt.state.adam[i];
      a.step = steps.at(i).get<std::int64_t>();
      if (a.step == 0) continue;
      a.m = tensor(std::string("adam.") + role_name(r) + ".m");
      a.v = tensor(std::string("adam.") + role_name(r) + ".v");
      if (a.m.size() != layout->total || a.v.size() != layout->total) throw LoadError("adam state size mismatch");
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid checkpoint architecture: ") + e.what());
  }
  return ckpt;
}

}  // namespace trs
