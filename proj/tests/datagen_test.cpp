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
#include <fstream>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "trs/datagen.hpp"
#include "trs/image_io.hpp"

using namespace trs;

TEST_CASE("generate_scene is a pure function of the seed") {
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  const Sample a = generate_scene(42, cfg, 3);
  const Sample b = generate_scene(42, cfg, 3);
  CHECK(a == b);
  REQUIRE(a.pose);
  CHECK(a.pose->size() == 7);
  CHECK(a.image.height == 64);
  CHECK(a.image.width == 64);
  CHECK_FALSE(generate_scene(43, cfg, 3).image == a.image);
}

TEST_CASE("rendered bones respect their length ranges") {
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const Sample s = generate_scene(seed, cfg);
    for (const Bone& bone : cfg.bones) {
      const Keypoint& p = (*s.pose)[bone.parent];
      const Keypoint& c = (*s.pose)[bone.child];
      const double d = std::hypot(c.x - p.x, c.y - p.y);
      CHECK(d >= bone.min_length - 1e-9);
      CHECK(d <= bone.max_length + 1e-9);
    }
  }
}

TEST_CASE("keypoints lie inside the frame and on bright pixels") {
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Sample s = generate_scene(seed, cfg);
    const float p90 = percentile(s.image, 90.0);
    for (const Keypoint& kp : s.pose->keypoints()) {
      REQUIRE(kp.visible);
      CHECK(kp.x >= 0.0);
      CHECK(kp.y >= 0.0);
      CHECK(kp.x < cfg.width);
      CHECK(kp.y < cfg.height);
      const int x = static_cast<int>(std::lround(kp.x));
      const int y = static_cast<int>(std::lround(kp.y));
      CHECK(s.image.at(0, y, x) >= p90);
    }
    for (float v : s.image.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("resolutions below 32x32 are rejected") {
  CHECK_THROWS_AS(generate_scene(0, SkeletonConfig::stick_figure(31, 64)), ConfigError);
  CHECK_THROWS_AS(generate_scene(0, SkeletonConfig::stick_figure(64, 16)), ConfigError);
  CHECK_NOTHROW(generate_scene(0, SkeletonConfig::stick_figure(32, 32)));
}

TEST_CASE("build_split counts, ids and determinism") {
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  const DatasetSplit split = build_split(0, 10, 100, cfg);
  CHECK(split.labeled.size() == 10);
  CHECK(split.unlabeled.size() == 100);
  std::set<std::int64_t> ids;
  for (const Sample& s : split.labeled) {
    CHECK(s.pose.has_value());
    ids.insert(s.id);
  }
  for (const Sample& s : split.unlabeled) {
    CHECK_FALSE(s.pose.has_value());
    CHECK(s.hidden_pose.has_value());
    ids.insert(s.id);
  }
  CHECK(ids.size() == 110);
  CHECK(build_split(0, 10, 100, cfg) == split);
  CHECK(build_split(0, 10, 0, cfg).unlabeled.empty());
  CHECK_THROWS_WITH_AS(build_split(0, 0, 5, cfg), "need at least one labeled sample", ConfigError);
}

TEST_CASE("validation slice never reuses training ids") {
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  const DatasetSplit split = build_split(5, 4, 6, cfg);
  const std::vector<Sample> val = build_validation(5, 4, 6, 3, cfg);
  REQUIRE(val.size() == 3);
  for (const Sample& v : val) {
    CHECK(v.pose.has_value());
    CHECK(v.id >= 10);
  }
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("load_coco_subset splits annotated and unannotated images") {
  const test::TempDir dir("coco");
  for (int i = 0; i < 5; ++i) {
    Image img(1, 64, 64, 0.1f * static_cast<float>(i));
    write_png(dir.path() / ("img" + std::to_string(i) + ".png"), img);
  }
  const std::string images =
      R"([{"id":0,"file_name":"img0.png","width":64,"height":64},{"id":1,"file_name":"img1.png","width":64,"height":64},)"
      R"({"id":2,"file_name":"img2.png","width":64,"height":64},{"id":3,"file_name":"img3.png","width":64,"height":64},)"
      R"({"id":4,"file_name":"img4.png","width":64,"height":64}])";
  const std::string kp = R"([10,12,2, 20,22,0, 30,32,1, 1,1,2, 2,2,2, 3,3,2, 4,4,2])";
  write_file(dir.path() / "index.json",
             R"({"images":)" + images + R"(,"annotations":[{"image_id":0,"keypoints":)" + kp +
                 R"(},{"image_id":3,"keypoints":)" + kp + "}]}");
  const LoadedDataset d = load_coco_subset(dir.path() / "index.json", dir.path());
  CHECK(d.report.ok());
  REQUIRE(d.split.labeled.size() == 2);
  CHECK(d.split.unlabeled.size() == 3);
  const Pose& pose = *d.split.labeled[0].pose;
  CHECK(pose.size() == 7);
  CHECK(pose[0].visible);
  CHECK(pose[0].x == 10.0);
  CHECK(pose[0].y == 12.0);
  CHECK_FALSE(pose[1].visible);
  CHECK_FALSE(pose[2].visible);

  write_file(dir.path() / "empty.json", R"({"images":)" + images + R"(,"annotations":[]})");
  const LoadedDataset e = load_coco_subset(dir.path() / "empty.json", dir.path());
  CHECK(e.split.labeled.empty());
  CHECK(e.split.unlabeled.size() == 5);
}

TEST_CASE("load_coco_subset error reporting") {
  const test::TempDir dir("coco_err");
  CHECK_THROWS_AS(load_coco_subset(dir.path() / "missing.json", dir.path()), LoadError);

  write_file(dir.path() / "bad.json", R"({"images": [ {"id": 1,, }])");
  try {
    load_coco_subset(dir.path() / "bad.json", dir.path());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() > 0);
    CHECK(e.byte_offset() < 30);
  }

  write_png(dir.path() / "ok.png", Image(1, 64, 64, 0.5f));
  write_file(dir.path() / "partial.json",
             R"({"images":[{"id":0,"file_name":"ok.png"},{"id":1,"file_name":"gone.png"}],"annotations":[)"
             R"({"image_id":1,"keypoints":[1,1,2,1,1,2,1,1,2,1,1,2,1,1,2,1,1,2,1,1,2]}]})");
  const LoadedDataset d = load_coco_subset(dir.path() / "partial.json", dir.path());
  CHECK_FALSE(d.report.ok());
  CHECK(d.split.unlabeled.size() == 1);
  CHECK(d.split.labeled.empty());
}

TEST_CASE("save_dataset round-trips through load_coco_subset") {
  const test::TempDir dir("roundtrip");
  const SkeletonConfig cfg = SkeletonConfig::stick_figure();
  const DatasetSplit split = build_split(9, 3, 4, cfg);
  save_dataset(dir.path(), split, cfg.joint_names);
  const LoadedDataset d = load_coco_subset(dir.path() / "index.json", dir.path());
  CHECK(d.report.ok());
  REQUIRE(d.split.labeled.size() == 3);
  REQUIRE(d.split.unlabeled.size() == 4);
  CHECK(d.joint_names == cfg.joint_names);
  for (std::size_t i = 0; i < 3; ++i) {
    const Sample& a = split.labeled[i];
    const Sample& b = d.split.labeled[i];
    CHECK(a.id == b.id);
    for (int j = 0; j < 7; ++j) {
      CHECK((*b.pose)[j].x == doctest::Approx((*a.pose)[j].x).epsilon(1e-9));
      CHECK((*b.pose)[j].y == doctest::Approx((*a.pose)[j].y).epsilon(1e-9));
    }
    // 8-bit PNG quantization.
    for (std::size_t p = 0; p < a.image.data.size(); ++p) CHECK(std::abs(a.image.data[p] - b.image.data[p]) <= 0.5f / 255.0f + 1e-6f);
  }
}
