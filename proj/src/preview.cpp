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

#include "trs/preview.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "trs/image_io.hpp"

namespace trs {

namespace {

constexpr int kScale = 3;

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void blit_gray(RgbImage& panel, const Image& img, int x0) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t v = to_byte(img.at(0, y, x));
      for (int dy = 0; dy < kScale; ++dy)
        for (int dx = 0; dx < kScale; ++dx) panel.set(x0 + x * kScale + dx, y * kScale + dy, v, v, v);
    }
  }
}

/// Max over joints, tinted; `cell` is the number of panel pixels per cell.
void blit_heatmap(RgbImage& panel, const HeatmapStack<float>& stack, int x0, int cell) {
  const Grid<float>& g = stack.values;
  for (int v = 0; v < g.height; ++v) {
    for (int u = 0; u < g.width; ++u) {
      float m = 0.0f;
      for (int j = 0; j < g.channels; ++j) m = std::max(m, g.at(j, v, u));
      const std::uint8_t r = to_byte(m);
      const std::uint8_t gr = to_byte(m * m);
      const std::uint8_t b = to_byte(0.3 * (1.0 - m));
      for (int dy = 0; dy < cell; ++dy)
        for (int dx = 0; dx < cell; ++dx) panel.set(x0 + u * cell + dx, v * cell + dy, r, gr, b);
    }
  }
}

void draw_rect(RgbImage& panel, int x0, int cx, int cy, int half) {
  const int l = x0 + (cx - half) * kScale;
  const int r = x0 + (cx + half + 1) * kScale - 1;
  const int t = (cy - half) * kScale;
  const int b = (cy + half + 1) * kScale - 1;
  for (int x = l; x <= r; ++x) {
    panel.set(x, t, 255, 40, 40);
    panel.set(x, b, 255, 40, 40);
  }
  for (int y = t; y <= b; ++y) {
    panel.set(l, y, 255, 40, 40);
    panel.set(r, y, 255, 40, 40);
  }
}

void draw_dot(RgbImage& panel, int x0, double px, double py) {
  const int cx = x0 + static_cast<int>(std::lround(px * kScale + kScale / 2));
  const int cy = static_cast<int>(std::lround(py * kScale + kScale / 2));
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) panel.set(cx + dx, cy + dy, 40, 220, 60);
}

void write_channels(const std::filesystem::path& dir, const char* prefix, const HeatmapStack<float>& stack,
                    std::vector<std::filesystem::path>& files) {
  for (int j = 0; j < stack.joints(); ++j) {
    Image plane(1, stack.height(), stack.width());
    std::copy(stack.values.plane(j).begin(), stack.values.plane(j).end(), plane.data.begin());
    char name[64];
    std::snprintf(name, sizeof name, "%s_%02d.png", prefix, j);
    write_png(dir / name, plane);
    files.push_back(dir / name);
  }
}

}  // namespace

PreviewResult write_preview(const std::filesystem::path& dir, const Sample& sample, const ArchConfig& arch,
                            const PreviewOptions& options, const ParameterSet<float>* params) {
  if (sample.image.height != arch.input_height || sample.image.width != arch.input_width)
    throw ShapeError("preview: sample size does not match the architecture input");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create preview directory " + dir.string() + ": " + ec.message());

  const int w = arch.input_width;
  const int h = arch.input_height;
  Rng rng(derive_seed(options.seed, 0));
  const AffineTransform t_easy = sample_affine(rng, Strength::easy, options.augment, w, h);
  const AffineTransform t_hard = sample_affine(rng, Strength::hard, options.augment, w, h);

  PreviewResult out;
  out.original = sample.image;
  out.easy = warp_image(sample.image, t_easy);
  out.hard = warp_image(sample.image, t_hard);

  std::optional<Network<float>> net;
  MultiLevelOutput<float> pred_original;
  if (params) {
    net.emplace(arch);
    pred_original = net->forward(*params, sample.image, LevelSet::z_only());
  }

  Pose in_hard;
  if (sample.pose) {
    in_hard = transform_pose(*sample.pose, t_hard, w, h);
  } else if (net) {
    const Pose easy_pred = decode(net->forward(*params, out.easy, LevelSet::z_only()).level_z);
    in_hard = transform_pose(easy_pred, t_easy.inverse().then(t_hard), w, h);
  } else if (sample.hidden_pose) {
    in_hard = transform_pose(*sample.hidden_pose, t_hard, w, h);
  }
  const int half = options.patch_half > 0 ? options.patch_half
                                          : static_cast<int>(std::lround(2.0 * options.sigma * arch.heatmap_stride));
  out.mix = keypoint_mix_clamped(out.hard, in_hard, options.k_mix, half, rng);
  out.mixed = out.mix.image;

  const auto save = [&](const char* name, const Image& img) {
    write_png(dir / name, img);
    out.files.push_back(dir / name);
  };
  save("original.png", out.original);
  save("easy.png", out.easy);
  save("hard.png", out.hard);
  save("mixed.png", out.mixed);

  std::optional<HeatmapStack<float>> gt;
  if (sample.pose) {
    gt = encode<float>(*sample.pose, options.sigma, arch.heatmap_height(), arch.heatmap_width(), arch.heatmap_stride);
    write_channels(dir, "heatmap_gt", *gt, out.files);
  }
  if (net) write_channels(dir, "heatmap_pred", pred_original.level_z, out.files);

  const int tile = w * kScale;
  const int tiles = 4 + (gt ? 1 : 0) + (net ? 1 : 0);
  RgbImage panel(tile * tiles + (tiles - 1) * 4, h * kScale);
  int x0 = 0;
  blit_gray(panel, out.original, x0);
  if (sample.pose) {
    for (const Keypoint& kp : sample.pose->keypoints()) {
      if (kp.visible) draw_dot(panel, x0, kp.x, kp.y);
    }
  }
  x0 += tile + 4;
  blit_gray(panel, out.easy, x0);
  x0 += tile + 4;
  blit_gray(panel, out.hard, x0);
  x0 += tile + 4;
  blit_gray(panel, out.mixed, x0);
  for (const auto& [cx, cy] : out.mix.centers) draw_rect(panel, x0, cx, cy, out.mix.patch_half);
  x0 += tile + 4;
  const int cell = arch.heatmap_stride * kScale;
  if (gt) {
    blit_heatmap(panel, *gt, x0, cell);
    x0 += tile + 4;
  }
  if (net) {
    blit_heatmap(panel, pred_original.level_z, x0, cell);
    if (sample.pose) {
      for (const Keypoint& kp : decode(pred_original.level_z).keypoints()) {
        if (kp.visible) draw_dot(panel, x0, kp.x, kp.y);
      }
    }
  }
  write_png(dir / "panel.png", panel);
  out.files.push_back(dir / "panel.png");
  return out;
}

}  // namespace trs
