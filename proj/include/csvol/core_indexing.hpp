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

// Morton (Z-curve) indexing and brick-local node addressing.
//
// Bit convention: x occupies the least significant bit of every 3-bit group,
// followed by y, then z. Encoder, decoder, renderer and cache all share it.

#ifndef CSVOL_CORE_INDEXING_HPP
#define CSVOL_CORE_INDEXING_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "csvol/error.hpp"

namespace csvol {

using Label = std::uint32_t;

struct BrickConfig {
  static constexpr int kMinLog2 = 1;
  static constexpr int kMaxLog2 = 7;

  int brick_log2 = 5;

  constexpr BrickConfig() = default;
  explicit BrickConfig(int log2) : brick_log2(log2) { validate(); }

  void validate() const {
    if (brick_log2 < kMinLog2 || brick_log2 > kMaxLog2) {
      throw Error(ErrorKind::kConfiguration,
                  "brick_log2 must lie in [1, 7], got " + std::to_string(brick_log2));
    }
  }

  static BrickConfig from_side(int side) {
    for (int n = kMinLog2; n <= kMaxLog2; ++n) {
      if ((1 << n) == side) return BrickConfig(n);
    }
    throw Error(ErrorKind::kConfiguration,
                "brick side must be a power of two in [2, 128], got " + std::to_string(side));
  }

  /// Coarsest level index N; the root lives on level N.
  constexpr int max_level() const { return brick_log2; }
  constexpr int level_count() const { return brick_log2 + 1; }
  constexpr int side() const { return 1 << brick_log2; }
  constexpr std::uint64_t voxels() const { return std::uint64_t{1} << (3 * brick_log2); }
  constexpr int level_side(int level) const { return 1 << (brick_log2 - level); }
  constexpr std::uint64_t level_nodes(int level) const {
    return std::uint64_t{1} << (3 * (brick_log2 - level));
  }

  friend constexpr bool operator==(const BrickConfig&, const BrickConfig&) = default;
};

enum class Axis : std::uint8_t { kX = 0, kY = 1, kZ = 2 };

struct NodeCoord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;
  int level = 0;

  constexpr std::uint32_t operator[](Axis axis) const {
    return axis == Axis::kX ? x : (axis == Axis::kY ? y : z);
  }
  friend constexpr bool operator==(const NodeCoord&, const NodeCoord&) = default;
};

namespace detail {

constexpr std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffffULL;
  v = (v | (v << 32)) & 0x1f00000000ffffULL;
  v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
  v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

constexpr std::uint32_t compact_bits(std::uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffffULL;
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Interleaves coordinate bits; each coordinate must be below 2^21.
constexpr std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  return detail::spread_bits(x) | (detail::spread_bits(y) << 1) | (detail::spread_bits(z) << 2);
}

constexpr std::array<std::uint32_t, 3> morton_decode(std::uint64_t index) {
  return {detail::compact_bits(index), detail::compact_bits(index >> 1),
          detail::compact_bits(index >> 2)};
}

constexpr std::uint64_t morton_encode(const NodeCoord& c) { return morton_encode(c.x, c.y, c.z); }

constexpr NodeCoord node_at(std::uint64_t index, int level) {
  const auto xyz = morton_decode(index);
  return {xyz[0], xyz[1], xyz[2], level};
}

/// Same-level neighbor along `axis`, pointing away from the node's 2^3 sibling
/// block (even coordinate steps down, odd steps up). Absent when the step leaves
/// the brick.
constexpr std::optional<NodeCoord> outside_neighbor(const NodeCoord& coord, Axis axis,
                                                    const BrickConfig& config) {
  const std::uint32_t side = static_cast<std::uint32_t>(config.level_side(coord.level));
  const std::uint32_t v = coord[axis];
  std::uint32_t moved = 0;
  if ((v & 1U) == 0) {
    if (v == 0) return std::nullopt;
    moved = v - 1;
  } else {
    if (v + 1 >= side) return std::nullopt;
    moved = v + 1;
  }
  NodeCoord out = coord;
  switch (axis) {
    case Axis::kX: out.x = moved; break;
    case Axis::kY: out.y = moved; break;
    case Axis::kZ: out.z = moved; break;
  }
  return out;
}

/// Morton-index form of outside_neighbor, computed with lane arithmetic.
constexpr std::optional<std::uint64_t> outside_neighbor_index(std::uint64_t index, int level,
                                                              Axis axis,
                                                              const BrickConfig& config) {
  const std::uint64_t lane = 0x1249249249249249ULL << static_cast<int>(axis);
  const std::uint64_t own = index & lane;
  const std::uint64_t rest = index & ~lane;
  if (((index >> static_cast<int>(axis)) & 1U) == 0) {
    if (own == 0) return std::nullopt;
    return ((own - 1) & lane) | rest;
  }
  const std::uint64_t moved = (((index | ~lane) + 1) & lane) | rest;
  if (moved >= config.level_nodes(level)) return std::nullopt;
  return moved;
}

}  // namespace csvol

#endif  // CSVOL_CORE_INDEXING_HPP
