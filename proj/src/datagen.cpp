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

#include "trs/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "trs/image_io.hpp"
#include "trs/rng.hpp"

namespace trs {
namespace {

using nlohmann::json;

constexpr int kMaxPlacementAttempts = 256;

struct Segment {
  double x0, y0, x1, y1;
  double half_width;
  float intensity;
};

double distance_to_segment(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0;
  const double dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0);
  return std::hypot(px - (s.x0 + t * dx), py - (s.y0 + t * dy));
}

// Coverage of a pixel by a shape whose boundary lies `edge` pixels away from
// the pixel center (negative inside): a one-pixel linear ramp.
float coverage(double signed_edge_distance) {
  return static_cast<float>(std::clamp(0.5 - signed_edge_distance, 0.0, 1.0));
}

std::vector<Keypoint> sample_relative_pose(Rng& rng, const SkeletonConfig& cfg) {
  std::vector<Keypoint> kps(static_cast<std::size_t>(cfg.joints()));
  const double body = rng.uniform(-cfg.body_rotation_deg, cfg.body_rotation_deg);
  kps[0] = {0.0, 0.0, true};
  for (const Bone& b : cfg.bones) {
    const double len = rng.uniform(b.min_length, b.max_length);
    const double ang = (body + b.angle_deg + rng.uniform(-b.angle_jitter_deg, b.angle_jitter_deg)) *
                       std::numbers::pi / 180.0;
    // Angle 0 points down (+y); positive angles rotate toward +x.
    const Keypoint& p = kps[static_cast<std::size_t>(b.parent)];
    kps[static_cast<std::size_t>(b.child)] = {p.x + len * std::sin(ang), p.y + len * std::cos(ang), true};
  }
  return kps;
}

Image resize_bilinear(const Image& src, int width, int height) {
  Image out(1, height, width);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double ax = fx - x0;
      const double v = (1 - ay) * ((1 - ax) * src.at(0, y0, x0) + ax * src.at(0, y0, x1)) +
                       ay * ((1 - ax) * src.at(0, y1, x0) + ax * src.at(0, y1, x1));
      out.at(0, y, x) = static_cast<float>(v);
    }
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open annotation file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

int Pose::visible_count() const {
  return static_cast<int>(std::count_if(keypoints_.begin(), keypoints_.end(), [](const Keypoint& k) { return k.visible; }));
}

void SkeletonConfig::validate() const {
  if (width < 32 || height < 32) {
    throw ConfigError("resolution " + std::to_string(width) + "x" + std::to_string(height) + " is below 32x32");
  }
  const int j = joints();
  if (j < 1) throw ConfigError("skeleton needs at least one joint");
  if (static_cast<int>(joint_radius.size()) != j) throw ConfigError("joint_radius must have one entry per joint");
  std::vector<bool> placed(static_cast<std::size_t>(j), false);
  placed[0] = true;
  for (const Bone& b : bones) {
    if (b.parent < 0 || b.parent >= j || b.child < 0 || b.child >= j) throw ConfigError("bone joint out of range");
    if (!placed[static_cast<std::size_t>(b.parent)]) throw ConfigError("bones must be in topological order");
    if (placed[static_cast<std::size_t>(b.child)]) throw ConfigError("joint placed twice");
    if (!(b.min_length > 0.0) || b.max_length < b.min_length) throw ConfigError("invalid bone length range");
    placed[static_cast<std::size_t>(b.child)] = true;
  }
  if (std::count(placed.begin(), placed.end(), false) > 0) throw ConfigError("every joint must be reachable from joint 0");
  for (int idx : {head_joint, left_shoulder_joint, right_shoulder_joint}) {
    if (idx < 0 || idx >= j) throw ConfigError("reference joint out of range");
  }
}

SkeletonConfig SkeletonConfig::stick_figure(int width, int height) {
  SkeletonConfig c;
  c.width = width;
  c.height = height;
  c.joint_names = {"head", "left_shoulder", "right_shoulder", "left_hand", "right_hand", "left_foot", "right_foot"};
  c.joint_radius = {3.0, 1.8, 1.8, 1.4, 1.4, 2.3, 2.3};
  // Left limbs are drawn brighter than right ones so the sides stay
  // distinguishable under rotation.
  c.bones = {
      {0, 1, 14.0, 18.0, 40.0, 8.0, 0.75f, 1.6},  {0, 2, 14.0, 18.0, -40.0, 8.0, 0.5f, 1.6},
      {1, 3, 10.0, 16.0, 55.0, 40.0, 0.75f, 1.2}, {2, 4, 10.0, 16.0, -55.0, 40.0, 0.5f, 1.2},
      {1, 5, 18.0, 24.0, 8.0, 10.0, 0.75f, 2.0},  {2, 6, 18.0, 24.0, -8.0, 10.0, 0.5f, 2.0},
  };
  // Scale lengths for non-default resolutions.
  const double s = std::min(width, height) / 64.0;
  if (s != 1.0) {
    for (Bone& b : c.bones) {
      b.min_length *= s;
      b.max_length *= s;
    }
    for (double& r : c.joint_radius) r *= s;
  }
  return c;
}

Sample generate_scene(std::uint64_t seed, const SkeletonConfig& cfg, std::int64_t id) {
  cfg.validate();
  Rng pose_rng(derive_seed(seed, 0));
  Rng place_rng(derive_seed(seed, 1));
  Rng texture_rng(derive_seed(seed, 2));

  const double lo_x = cfg.margin;
  const double hi_x = cfg.width - 1 - cfg.margin;
  const double lo_y = cfg.margin;
  const double hi_y = cfg.height - 1 - cfg.margin;

  std::vector<Keypoint> kps;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxPlacementAttempts) {
      throw ConfigError("skeleton does not fit in a " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height) +
                        " image with margin " + std::to_string(cfg.margin));
    }
    kps = sample_relative_pose(pose_rng, cfg);
    double min_x = kps[0].x, max_x = kps[0].x, min_y = kps[0].y, max_y = kps[0].y;
    for (const Keypoint& k : kps) {
      min_x = std::min(min_x, k.x);
      max_x = std::max(max_x, k.x);
      min_y = std::min(min_y, k.y);
      max_y = std::max(max_y, k.y);
    }
    if (max_x - min_x > hi_x - lo_x || max_y - min_y > hi_y - lo_y) continue;
    const double tx = place_rng.uniform(lo_x - min_x, hi_x - max_x);
    const double ty = place_rng.uniform(lo_y - min_y, hi_y - max_y);
    for (Keypoint& k : kps) {
      k.x += tx;
      k.y += ty;
    }
    break;
  }

  std::vector<Segment> segments;
  for (int d = 0; d < cfg.distractors; ++d) {
    const double x = texture_rng.uniform(0.0, cfg.width - 1.0);
    const double y = texture_rng.uniform(0.0, cfg.height - 1.0);
    const double len = texture_rng.uniform(6.0, 14.0);
    const double ang = texture_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto intensity = static_cast<float>(texture_rng.uniform(0.15, 0.35));
    segments.push_back({x, y, x + len * std::cos(ang), y + len * std::sin(ang), 0.5, intensity});
  }
  for (const Bone& b : cfg.bones) {
    const Keypoint& p = kps[static_cast<std::size_t>(b.parent)];
    const Keypoint& c = kps[static_cast<std::size_t>(b.child)];
    segments.push_back({p.x, p.y, c.x, c.y, 0.5 * b.thickness, b.intensity});
  }

  Sample sample;
  sample.id = id;
  sample.image = make_image(cfg.height, cfg.width);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      float v = static_cast<float>(texture_rng.uniform(0.0, cfg.background_noise));
      for (const Segment& s : segments) {
        v = std::max(v, s.intensity * coverage(distance_to_segment(x, y, s) - s.half_width));
      }
      for (int j = 0; j < cfg.joints(); ++j) {
        const Keypoint& k = kps[static_cast<std::size_t>(j)];
        v = std::max(v, coverage(std::hypot(x - k.x, y - k.y) - cfg.joint_radius[static_cast<std::size_t>(j)]));
      }
      sample.image.at(0, y, x) = v;
    }
  }
  sample.pose = Pose(std::move(kps));
  return sample;
}

std::vector<Sample> generate_samples(std::uint64_t seed, std::int64_t first_index, std::int64_t count,
                                     const SkeletonConfig& config, bool labeled) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::int64_t i = first_index; i < first_index + count; ++i) {
    Sample s = generate_scene(derive_seed(seed, static_cast<std::uint64_t>(i)), config, i);
    if (!labeled) {
      s.hidden_pose = std::move(s.pose);
      s.pose.reset();
    }
    out.push_back(std::move(s));
  }
  return out;
}

DatasetSplit build_split(std::uint64_t seed, int n_labeled, int n_unlabeled, const SkeletonConfig& config) {
  if (n_labeled < 1) throw ConfigError("need at least one labeled sample");
  if (n_unlabeled < 0) throw ConfigError("unlabeled count must be non-negative");
  config.validate();
  DatasetSplit split;
  split.labeled = generate_samples(seed, 0, n_labeled, config, true);
  split.unlabeled = generate_samples(seed, n_labeled, n_unlabeled, config, false);
  return split;
}

std::vector<Sample> build_validation(std::uint64_t seed, int n_labeled, int n_unlabeled, int count,
                                     const SkeletonConfig& config) {
  if (count < 1) throw ConfigError("validation set needs at least one sample");
  return generate_samples(seed, static_cast<std::int64_t>(n_labeled) + n_unlabeled, count, config, true);
}

float percentile(const Image& image, double pct) {
  if (image.empty()) throw ShapeError("percentile of empty image");
  std::vector<float> v(image.data);
  std::sort(v.begin(), v.end());
  const double rank = std::ceil(pct / 100.0 * static_cast<double>(v.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(v.size()))) - 1;
  return v[idx];
}

LoadedDataset load_coco_subset(const std::filesystem::path& annotation_path, const std::filesystem::path& image_dir,
                               int width, int height) {
  if (!std::filesystem::exists(annotation_path)) throw LoadError("annotation file not found: " + annotation_path.string());
  const json root = read_json_file(annotation_path);
  if (!root.is_object() || !root.contains("images") || !root["images"].is_array()) {
    throw LoadError(annotation_path.string() + ": expected an object with an \"images\" array");
  }

  LoadedDataset out;
  if (root.contains("info")) out.info_json = root["info"].dump();
  if (root.contains("categories") && root["categories"].is_array() && !root["categories"].empty() &&
      root["categories"][0].contains("keypoints")) {
    out.joint_names = root["categories"][0]["keypoints"].get<std::vector<std::string>>();
  }

  struct ImageRecord {
    std::string file_name;
    int width = 0;
    int height = 0;
  };
  std::map<std::int64_t, ImageRecord> images;
  std::vector<std::int64_t> order;
  for (const json& img : root["images"]) {
    try {
      const auto id = img.at("id").get<std::int64_t>();
      ImageRecord rec{img.at("file_name").get<std::string>(), img.value("width", 0), img.value("height", 0)};
      if (!images.emplace(id, rec).second) {
        out.report.errors.push_back("duplicate image id " + std::to_string(id));
        continue;
      }
      order.push_back(id);
    } catch (const json::exception& e) {
      out.report.errors.push_back(std::string("malformed image record: ") + e.what());
    }
  }

  std::map<std::int64_t, std::vector<double>> keypoints;
  if (root.contains("annotations")) {
    for (const json& ann : root["annotations"]) {
      try {
        const auto image_id = ann.at("image_id").get<std::int64_t>();
        if (!images.contains(image_id)) {
          out.report.errors.push_back("annotation references unknown image id " + std::to_string(image_id));
          continue;
        }
        auto kp = ann.at("keypoints").get<std::vector<double>>();
        if (kp.empty() || kp.size() % 3 != 0) {
          out.report.errors.push_back("annotation for image " + std::to_string(image_id) +
                                      " has a keypoint list whose length is not a multiple of 3");
          continue;
        }
        // Single-person scenes: the first annotation of an image wins.
        keypoints.emplace(image_id, std::move(kp));
      } catch (const json::exception& e) {
        out.report.errors.push_back(std::string("malformed annotation: ") + e.what());
      }
    }
  }

  for (std::int64_t id : order) {
    const ImageRecord& rec = images.at(id);
    const std::filesystem::path path = image_dir / rec.file_name;
    Sample sample;
    sample.id = id;
    Image raw;
    try {
      if (!std::filesystem::exists(path)) throw LoadError("image file not found: " + path.string());
      raw = read_image(path);
    } catch (const LoadError& e) {
      out.report.errors.push_back("image " + std::to_string(id) + ": " + e.what());
      continue;
    }
    const bool resize = raw.width != width || raw.height != height;
    const double sx = static_cast<double>(width) / raw.width;
    const double sy = static_cast<double>(height) / raw.height;
    sample.image = resize ? resize_bilinear(raw, width, height) : std::move(raw);
    if (auto it = keypoints.find(id); it != keypoints.end()) {
      const std::vector<double>& kp = it->second;
      Pose pose(static_cast<int>(kp.size() / 3));
      for (int j = 0; j < pose.size(); ++j) {
        double x = kp[3 * j];
        double y = kp[3 * j + 1];
        if (resize) {
          x = (x + 0.5) * sx - 0.5;
          y = (y + 0.5) * sy - 0.5;
        }
        const bool flagged = static_cast<int>(kp[3 * j + 2]) == 2;
        pose[j] = {x, y, flagged && x >= 0.0 && y >= 0.0 && x < width && y < height};
      }
      sample.pose = std::move(pose);
      out.split.labeled.push_back(std::move(sample));
    } else {
      out.split.unlabeled.push_back(std::move(sample));
    }
  }
  if (out.joint_names.empty() && !out.split.labeled.empty()) {
    for (int j = 0; j < out.split.labeled.front().pose->size(); ++j) out.joint_names.push_back("joint" + std::to_string(j));
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const DatasetSplit& split, const std::vector<std::string>& joint_names,
                  const std::string& info_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw LoadError("cannot create " + (dir / "images").string() + ": " + ec.message());

  json images = json::array();
  json annotations = json::array();
  auto add = [&](const Sample& s) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(s.id));
    const std::string file_name = std::string("images/") + name;
    write_png(dir / file_name, s.image);
    images.push_back({{"id", s.id}, {"file_name", file_name}, {"width", s.image.width}, {"height", s.image.height}});
    if (s.pose) {
      json kp = json::array();
      for (const Keypoint& k : s.pose->keypoints()) {
        kp.push_back(k.visible ? k.x : 0.0);
        kp.push_back(k.visible ? k.y : 0.0);
        kp.push_back(k.visible ? 2 : 0);
      }
      annotations.push_back({{"image_id", s.id}, {"keypoints", kp}, {"num_keypoints", s.pose->visible_count()}});
    }
  };
  for (const Sample& s : split.labeled) add(s);
  for (const Sample& s : split.unlabeled) add(s);

  json root;
  root["info"] = json::parse(info_json);
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["categories"] = json::array({{{"id", 1}, {"name", "figure"}, {"keypoints", joint_names}}});

  std::ofstream out(dir / "index.json", std::ios::binary);
  if (!out) throw LoadError("cannot write " + (dir / "index.json").string());
  out << root.dump(2) << '\n';
  if (!out) throw LoadError("failed writing " + (dir / "index.json").string());
}

}  // namespace trs
