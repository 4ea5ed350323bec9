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

#include "trs/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#ifndef TRS_VERSION_STRING
#define TRS_VERSION_STRING "0.0.0-unknown"
#endif

namespace trs {

using nlohmann::json;

const char* version_string() { return TRS_VERSION_STRING; }

namespace {

enum class Kind { integer, unsigned_integer, real, boolean, text, int_list };

struct Field {
  const char* name;
  const char* help;
  Kind kind;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "off" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected on/off or true/false, got '" + text + "'");
}

json text_to_json(const std::string& key, Kind kind, const std::string& raw) {
  const std::string text = trim(raw);
  switch (kind) {
    case Kind::integer: return parse_int<std::int64_t>(key, text);
    case Kind::unsigned_integer: return parse_int<std::uint64_t>(key, text);
    case Kind::real: return parse_real(key, text);
    case Kind::boolean: return parse_bool(key, text);
    case Kind::text:
      if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
        try {
          return json::parse(text);
        } catch (const json::exception&) {
          throw ConfigError(key + ": malformed quoted string");
        }
      }
      return text;
    case Kind::int_list: {
      std::string body = text;
      if (!body.empty() && body.front() == '[') {
        if (body.back() != ']') throw ConfigError(key + ": unterminated list");
        body = body.substr(1, body.size() - 2);
      }
      json list = json::array();
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        list.push_back(parse_int<int>(key, t));
      }
      return list;
    }
  }
  return nullptr;
}

std::string json_to_text(Kind kind, const json& v) {
  switch (kind) {
    case Kind::boolean: return v.get<bool>() ? "on" : "off";
    case Kind::text: return v.dump();
    default: return v.dump();
  }
}

template <typename V>
V get_checked(const std::string& key, const json& v) {
  try {
    return v.get<V>();
  } catch (const json::exception&) {
    throw ConfigError(key + ": wrong value type " + v.dump());
  }
}

#define TRS_FIELD(NAME, HELP, KIND, TYPE, EXPR)                                                       \
  Field {                                                                                            \
    NAME, HELP, KIND, [](const RunConfig& c) -> json { return c.EXPR; },                             \
        [](RunConfig& c, const json& v) { c.EXPR = get_checked<TYPE>(NAME, v); }                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TRS_FIELD("train.lambda", "weight of the supervised loss in the total", Kind::real, double, training.lambda),
      TRS_FIELD("train.alpha", "EMA momentum of reviewer R1 (shadows G)", Kind::real, double, training.alpha),
      TRS_FIELD("train.beta", "EMA momentum of reviewer R2 (shadows F)", Kind::real, double, training.beta),
      TRS_FIELD("train.eta", "EMA momentum of the mean teacher (baseline mode)", Kind::real, double, training.eta),
      TRS_FIELD("train.k_mix", "keypoints mixed per hard view (K)", Kind::integer, int, training.k_mix),
      TRS_FIELD("train.km_patch_half", "Keypoint-Mix patch half-size in pixels, 0 = 2*sigma*stride", Kind::integer,
                int, training.km_patch_half),
      TRS_FIELD("train.batch_labeled", "labeled samples per step (b)", Kind::integer, int, training.batch_labeled),
      TRS_FIELD("train.batch_unlabeled", "unlabeled samples per step (c)", Kind::integer, int,
                training.batch_unlabeled),
      TRS_FIELD("train.max_iterations", "training iterations (E)", Kind::integer, std::int64_t,
                training.max_iterations),
      Field{"train.mfl", "multi-level heatmap losses (levels {z,p}; off = {z})", Kind::boolean,
            [](const RunConfig& c) -> json { return c.training.ablation.mfl; },
            [](RunConfig& c, const json& v) { c.training.set_mfl(get_checked<bool>("train.mfl", v)); }},
      TRS_FIELD("train.km", "Keypoint-Mix on hard views", Kind::boolean, bool, training.ablation.km),
      TRS_FIELD("train.reviewer", "reviewer networks R1/R2", Kind::boolean, bool, training.ablation.reviewer),
      TRS_FIELD("train.reviewer_grad", "reviewers also take gradient steps on the supervised loss", Kind::boolean,
                bool, training.reviewer_grad),
      Field{"train.optimizer", "sgd or adam", Kind::text,
            [](const RunConfig& c) -> json { return c.training.optimizer == OptimizerKind::adam ? "adam" : "sgd"; },
            [](RunConfig& c, const json& v) {
              const auto s = get_checked<std::string>("train.optimizer", v);
              if (s == "adam") {
                c.training.optimizer = OptimizerKind::adam;
              } else if (s == "sgd") {
                c.training.optimizer = OptimizerKind::sgd;
              } else {
                throw ConfigError("train.optimizer: expected sgd or adam, got '" + s + "'");
              }
            }},
      TRS_FIELD("train.learning_rate", "initial learning rate", Kind::real, double, training.learning_rate),
      TRS_FIELD("train.lr_decay", "x0.1 at 70% and 90% of max_iterations", Kind::boolean, bool, training.lr_decay),
      TRS_FIELD("train.sigma", "Gaussian target width in heatmap cells", Kind::real, double, training.sigma),
      TRS_FIELD("train.easy_rotation", "easy view max rotation (degrees)", Kind::real, double,
                training.augment.easy.max_rotation_deg),
      TRS_FIELD("train.easy_min_scale", "easy view min scale", Kind::real, double, training.augment.easy.min_scale),
      TRS_FIELD("train.easy_max_scale", "easy view max scale", Kind::real, double, training.augment.easy.max_scale),
      TRS_FIELD("train.hard_rotation", "hard view max rotation (degrees)", Kind::real, double,
                training.augment.hard.max_rotation_deg),
      TRS_FIELD("train.hard_min_scale", "hard view min scale", Kind::real, double, training.augment.hard.min_scale),
      TRS_FIELD("train.hard_max_scale", "hard view max scale", Kind::real, double, training.augment.hard.max_scale),
      Field{"train.mode", "trs, baseline (mean teacher) or supervised", Kind::text,
            [](const RunConfig& c) -> json { return mode_name(c.training.mode); },
            [](RunConfig& c, const json& v) {
              c.training.mode = parse_mode(get_checked<std::string>("train.mode", v));
            }},
      TRS_FIELD("train.seed", "initialization, sampling and augmentation seed", Kind::unsigned_integer,
                std::uint64_t, training.seed),
      TRS_FIELD("train.log_interval", "iterations per metrics row", Kind::integer, int, training.log_interval),
      TRS_FIELD("train.pck_threshold", "PCK threshold as a fraction of head size", Kind::real, double,
                training.pck_threshold),
      TRS_FIELD("arch.input_height", "input height in pixels", Kind::integer, int, arch.input_height),
      TRS_FIELD("arch.input_width", "input width in pixels", Kind::integer, int, arch.input_width),
      TRS_FIELD("arch.channels", "backbone stage widths", Kind::int_list, std::vector<int>, arch.channels),
      TRS_FIELD("arch.head_channels", "head convolution width", Kind::integer, int, arch.head_channels),
      TRS_FIELD("arch.joints", "keypoints per figure", Kind::integer, int, arch.joints),
      TRS_FIELD("arch.heatmap_stride", "input pixels per heatmap cell", Kind::integer, int, arch.heatmap_stride),
      TRS_FIELD("data.dir", "dataset directory; empty = synthetic split in memory", Kind::text, std::string,
                data_dir),
      TRS_FIELD("data.validation_dir", "labeled validation directory; empty = synthetic held-out slice",
                Kind::text, std::string, validation_dir),
      TRS_FIELD("data.seed", "synthetic dataset seed", Kind::unsigned_integer, std::uint64_t, data_seed),
      TRS_FIELD("data.labeled", "synthetic labeled samples", Kind::integer, int, n_labeled),
      TRS_FIELD("data.unlabeled", "synthetic unlabeled samples", Kind::integer, int, n_unlabeled),
      TRS_FIELD("data.validation", "synthetic validation samples", Kind::integer, int, n_validation),
      TRS_FIELD("run.out_dir", "output directory", Kind::text, std::string, out_dir),
      TRS_FIELD("run.checkpoint_interval", "iterations between checkpoints, 0 = at exit only", Kind::integer,
                std::int64_t, checkpoint_interval),
  };
  return table;
}

#undef TRS_FIELD

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.name) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  training.validate();
  arch.validate();
  if (data_dir.empty()) {
    if (n_labeled < 1) throw ConfigError("need at least one labeled sample");
    if (n_unlabeled < 0) throw ConfigError("data.unlabeled must be nonnegative");
  }
  if (validation_dir.empty() && n_validation < 1) throw ConfigError("data.validation must be at least 1");
  if (checkpoint_interval < 0) throw ConfigError("run.checkpoint_interval must be nonnegative");
  if (out_dir.empty()) throw ConfigError("run.out_dir must not be empty");
}

SkeletonConfig RunConfig::skeleton() const { return SkeletonConfig::stick_figure(arch.input_width, arch.input_height); }

PckReference RunConfig::pck_reference() const {
  const SkeletonConfig s = skeleton();
  return PckReference::head_size(s.head_joint, s.left_shoulder_joint, s.right_shoulder_joint);
}

std::vector<ConfigKey> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKey> out;
  for (const Field& f : fields()) out.push_back({f.name, f.help, json_to_text(f.kind, f.get(defaults))});
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  f.set(config, text_to_json(key, f.kind, value));
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = line;
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body.resize(i);
        break;
      }
    }
    body = trim(body);
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set_config_value(base, full, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const Field& f : fields()) j[f.name] = f.get(config);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config JSON must be an object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) find_field(key).set(c, value);
  return c;
}

std::string to_config_text(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    const std::string name = f.name;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + json_to_text(f.kind, f.get(config)) + "\n";
  }
  return out;
}

json arch_to_json(const ArchConfig& a) {
  return {{"input_height", a.input_height}, {"input_width", a.input_width},
          {"channels", a.channels},         {"head_channels", a.head_channels},
          {"joints", a.joints},             {"heatmap_stride", a.heatmap_stride}};
}

ArchConfig arch_from_json(const json& j) {
  try {
    ArchConfig a;
    a.input_height = j.at("input_height").get<int>();
    a.input_width = j.at("input_width").get<int>();
    a.channels = j.at("channels").get<std::vector<int>>();
    a.head_channels = j.at("head_channels").get<int>();
    a.joints = j.at("joints").get<int>();
    a.heatmap_stride = j.at("heatmap_stride").get<int>();
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed architecture record: ") + e.what());
  }
}

json pck_to_json(const PckReport& r) {
  return {{"total", r.total},
          {"threshold", r.threshold},
          {"per_joint", r.per_joint},
          {"visible_per_joint", r.visible_per_joint}};
}

}  // namespace trs
