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
#include <vector>

#include "trs/grid.hpp"

namespace trs {

/// 8-bit RGB raster used for preview panels.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // rgbrgb...

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Writes the first channel as 8-bit grayscale; values are clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Decodes PNG or JPEG (by signature) to a single-channel image in [0, 1].
Image read_image(const std::filesystem::path& path);

}  // namespace trs
