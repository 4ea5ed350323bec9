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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trs/error.hpp"

namespace trs {

/// Dense channels x height x width array, row-major within a channel.
/// Pixel (x, y) has its center at integer coordinates (x, y).
template <typename T>
struct Grid {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
    if (c < 0 || h < 0 || w < 0) throw ShapeError("negative grid dimension");
  }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T& at(int c, int y, int x) { return data[(c * plane_size()) + static_cast<std::size_t>(y) * width + x]; }
  const T& at(int c, int y, int x) const {
    return data[(c * plane_size()) + static_cast<std::size_t>(y) * width + x];
  }

  std::span<T> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

  bool same_shape(const Grid& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }

  template <typename U>
  Grid<U> cast() const {
    Grid<U> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Grayscale image with values in [0, 1].
using Image = Grid<float>;

inline Image make_image(int height, int width) { return Image(1, height, width); }

template <typename T>
void require_same_shape(const Grid<T>& a, const Grid<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.channels) + "x" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

}  // namespace trs
