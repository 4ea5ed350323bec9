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
#include <stdexcept>
#include <string>

namespace trs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, violated preconditions, inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A file or directory could not be read or written.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Malformed JSON input; carries the byte offset reported by the parser.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(double value)
      : Error("non-finite loss: " + std::to_string(value)), value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

/// Raised by keypoint_mix when fewer than k keypoints are visible. The caller
/// decides whether to retry with k = visible().
class InsufficientKeypoints : public Error {
 public:
  InsufficientKeypoints(int requested, int visible)
      : Error("keypoint mix requested " + std::to_string(requested) +
              " keypoints but only " + std::to_string(visible) + " are visible"),
        requested_(requested),
        visible_(visible) {}
  int requested() const { return requested_; }
  int visible() const { return visible_; }

 private:
  int requested_;
  int visible_;
};

}  // namespace trs
