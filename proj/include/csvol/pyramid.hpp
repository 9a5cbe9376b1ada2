// Copyright 2026 The csvol Authors
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

#ifndef CSVOL_PYRAMID_HPP
#define CSVOL_PYRAMID_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csvol/core_indexing.hpp"
#include "csvol/error.hpp"

namespace csvol {

/// Most frequent of eight sibling labels; ties go to the label that occurs
/// first in Morton child order.
inline Label most_frequent_of_8(const Label* children) {
  Label best = children[0];
  int best_count = 0;
  for (int i = 0; i < 8; ++i) {
    int count = 0;
    for (int j = 0; j < 8; ++j) count += children[j] == children[i] ? 1 : 0;
    if (count > best_count) {
      best_count = count;
      best = children[i];
    }
    if (best_count > 4) break;
  }
  return best;
}

/// Halves a Morton-ordered grid of side `side`.
inline std::vector<Label> downsample_level(std::span<const Label> child_grid, int side) {
  if (side < 2 || (side & 1) != 0) {
    throw Error(ErrorKind::kInputShape,
                "downsample needs an even side length, got " + std::to_string(side));
  }
  const std::uint64_t expected = std::uint64_t(side) * side * side;
  if (child_grid.size() != expected) {
    throw Error(ErrorKind::kInputShape, "grid holds " + std::to_string(child_grid.size()) +
                                            " labels, side " + std::to_string(side) +
                                            " needs " + std::to_string(expected));
  }
  std::vector<Label> parent(child_grid.size() / 8);
  for (std::size_t i = 0; i < parent.size(); ++i) {
    parent[i] = most_frequent_of_8(child_grid.data() + 8 * i);
  }
  return parent;
}

/// Resolution pyramid of one brick. Every level is stored in Morton order;
/// level 0 holds the brick's b^3 labels and level N the single root.
class Pyramid {
 public:
  Pyramid() = default;

  const BrickConfig& config() const { return config_; }
  int max_level() const { return config_.max_level(); }

  std::span<const Label> level(int l) const { return levels_[l]; }
  Label label(int l, std::uint64_t index) const { return levels_[l][index]; }
  Label root() const { return levels_.back()[0]; }

  /// True iff every leaf below the node carries the node's label.
  bool constant(int l, std::uint64_t index) const { return constant_[l][index] != 0; }

  friend Pyramid build_pyramid(std::span<const Label> brick_labels, const BrickConfig& config);

 private:
  BrickConfig config_;
  std::vector<std::vector<Label>> levels_;
  std::vector<std::vector<std::uint8_t>> constant_;
};

/// `brick_labels` must be the b^3 labels of level 0 in Morton order.
inline Pyramid build_pyramid(std::span<const Label> brick_labels, const BrickConfig& config) {
  config.validate();
  if (brick_labels.size() != config.voxels()) {
    throw Error(ErrorKind::kInputShape, "brick holds " + std::to_string(brick_labels.size()) +
                                            " labels, expected " +
                                            std::to_string(config.voxels()));
  }
  Pyramid p;
  p.config_ = config;
  const int n = config.max_level();
  p.levels_.resize(n + 1);
  p.constant_.resize(n + 1);
  p.levels_[0].assign(brick_labels.begin(), brick_labels.end());
  p.constant_[0].assign(brick_labels.size(), 1);
  for (int l = 1; l <= n; ++l) {
    const auto& below = p.levels_[l - 1];
    const auto& below_const = p.constant_[l - 1];
    const std::uint64_t count = config.level_nodes(l);
    auto& labels = p.levels_[l];
    auto& flags = p.constant_[l];
    labels.resize(count);
    flags.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const Label* children = below.data() + 8 * i;
      labels[i] = most_frequent_of_8(children);
      bool uniform = true;
      for (int c = 0; c < 8 && uniform; ++c) {
        uniform = below_const[8 * i + c] != 0 && children[c] == children[0];
      }
      flags[i] = uniform ? 1 : 0;
    }
  }
  return p;
}

}  // namespace csvol

#endif  // CSVOL_PYRAMID_HPP
