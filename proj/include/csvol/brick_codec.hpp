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

// Per-brick multi-resolution encoding.
//
// A brick becomes a palette plus a sequence of 4-bit nibbles, one per emitted
// pyramid node, laid out as (stop << 3) | opcode. Nodes are visited level by
// level from the root down, in Morton order within a level. Children of a
// node whose subtree is constant are never emitted. Nibbles of level-0 nodes
// go to the detail stream, everything coarser to the coarse stream.

#ifndef CSVOL_BRICK_CODEC_HPP
#define CSVOL_BRICK_CODEC_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csvol/core_indexing.hpp"
#include "csvol/error.hpp"
#include "csvol/pyramid.hpp"

namespace csvol {

enum class OpCode : std::uint8_t {
  kParent = 0,         // R_p
  kNeighborX = 1,      // R_x
  kNeighborY = 2,      // R_y
  kNeighborZ = 3,      // R_z
  kPaletteLast = 4,    // P_0
  kPaletteDelta = 5,   // P_delta, followed by one payload nibble
  kPaletteAdvance = 6, // P_a
};

inline constexpr int kOpCodeCount = 7;
inline constexpr int kMaxDelta = 15;

inline const char* op_name(OpCode op) {
  switch (op) {
    case OpCode::kParent: return "R_p";
    case OpCode::kNeighborX: return "R_x";
    case OpCode::kNeighborY: return "R_y";
    case OpCode::kNeighborZ: return "R_z";
    case OpCode::kPaletteLast: return "P_0";
    case OpCode::kPaletteDelta: return "P_delta";
    case OpCode::kPaletteAdvance: return "P_a";
  }
  return "?";
}

constexpr std::uint8_t make_nibble(OpCode op, bool stop) {
  return static_cast<std::uint8_t>((stop ? 8U : 0U) | static_cast<std::uint8_t>(op));
}
constexpr std::uint8_t nibble_opcode(std::uint8_t nibble) { return nibble & 7U; }
constexpr bool nibble_stop(std::uint8_t nibble) { return (nibble & 8U) != 0; }

struct BrickEncoding {
  std::vector<Label> palette;
  std::vector<std::uint8_t> coarse;  // one nibble per element
  std::vector<std::uint8_t> detail;

  /// Empty streams mean the whole brick carries palette[0].
  bool is_constant() const { return coarse.empty() && detail.empty(); }

  friend bool operator==(const BrickEncoding&, const BrickEncoding&) = default;
};

struct OperationChoice {
  OpCode op = OpCode::kPaletteAdvance;
  int delta = 0;

  friend constexpr bool operator==(const OperationChoice&, const OperationChoice&) = default;
};

/// Labels a decoder would observe through R_x, R_y and R_z for one node.
struct NeighborContext {
  std::array<std::optional<Label>, 3> observed;
};

/// Same-level neighbors that precede `index` have already been decoded and
/// are read directly; later ones are read through their parent.
inline NeighborContext observed_neighbors(const Pyramid& pyramid, int level,
                                          std::uint64_t index) {
  NeighborContext ctx;
  for (int a = 0; a < 3; ++a) {
    const auto nb = outside_neighbor_index(index, level, static_cast<Axis>(a), pyramid.config());
    if (!nb) continue;
    ctx.observed[a] = *nb < index ? pyramid.label(level, *nb) : pyramid.label(level + 1, *nb >> 3);
  }
  return ctx;
}

/// First applicable operation in the order R_p, R_x, R_y, R_z, P_0, P_delta, P_a.
/// `last_used` is the palette index consumed most recently.
inline OperationChoice best_operation(Label child, Label parent, const NeighborContext& neighbors,
                                      std::span<const Label> palette, std::size_t last_used) {
  if (child == parent) return {OpCode::kParent, 0};
  for (int a = 0; a < 3; ++a) {
    if (neighbors.observed[a] && *neighbors.observed[a] == child) {
      return {static_cast<OpCode>(static_cast<int>(OpCode::kNeighborX) + a), 0};
    }
  }
  if (palette[last_used] == child) return {OpCode::kPaletteLast, 0};
  for (int delta = 0; delta <= kMaxDelta; ++delta) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(last_used) - delta - 1;
    if (idx < 0) break;
    if (palette[static_cast<std::size_t>(idx)] == child) return {OpCode::kPaletteDelta, delta};
  }
  return {OpCode::kPaletteAdvance, 0};
}

inline BrickEncoding encode_brick(const Pyramid& pyramid) {
  const BrickConfig& config = pyramid.config();
  const int n = config.max_level();
  BrickEncoding enc;
  enc.palette.push_back(pyramid.root());
  if (pyramid.constant(n, 0)) return enc;

  std::size_t last_used = 0;
  for (int l = n; l >= 1; --l) {
    const int child_level = l - 1;
    auto& out = child_level == 0 ? enc.detail : enc.coarse;
    const std::uint64_t nodes = config.level_nodes(l);
    for (std::uint64_t m = 0; m < nodes; ++m) {
      if (pyramid.constant(l, m)) continue;
      const Label parent = pyramid.label(l, m);
      for (std::uint64_t c = 0; c < 8; ++c) {
        const std::uint64_t child = 8 * m + c;
        const Label label = pyramid.label(child_level, child);
        const bool stop = child_level > 0 && pyramid.constant(child_level, child);
        // Neighbors only matter once R_p has failed.
        const NeighborContext ctx =
            label == parent ? NeighborContext{} : observed_neighbors(pyramid, child_level, child);
        const OperationChoice choice = best_operation(label, parent, ctx, enc.palette, last_used);
        if (choice.op == OpCode::kPaletteAdvance) {
          enc.palette.push_back(label);
          last_used = enc.palette.size() - 1;
        }
        out.push_back(make_nibble(choice.op, stop));
        if (choice.op == OpCode::kPaletteDelta) out.push_back(static_cast<std::uint8_t>(choice.delta));
      }
    }
  }
  return enc;
}

/// Pull source over an unpacked nibble array.
class NibbleSpanSource {
 public:
  NibbleSpanSource(std::span<const std::uint8_t> nibbles, const char* name)
      : nibbles_(nibbles), name_(name) {}

  std::uint8_t next() {
    if (pos_ >= nibbles_.size()) {
      throw Error(ErrorKind::kCorruptStream,
                  std::string(name_) + " stream underrun at nibble " + std::to_string(pos_));
    }
    return nibbles_[pos_++] & 0xFU;
  }
  std::uint64_t consumed() const { return pos_; }
  const char* name() const { return name_; }

 private:
  std::span<const std::uint8_t> nibbles_;
  const char* name_;
  std::uint64_t pos_ = 0;
};

namespace detail {

class SlotBits {
 public:
  explicit SlotBits(std::uint64_t slots) : words_((slots + 63) / 64, 0) {}

  bool test(std::uint64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }

  /// Marks [begin, begin + count); count is a power of 8 and begin is aligned to it.
  void set_block(std::uint64_t begin, std::uint64_t count) {
    if (count >= 64) {
      std::fill(words_.begin() + static_cast<std::ptrdiff_t>(begin >> 6),
                words_.begin() + static_cast<std::ptrdiff_t>((begin + count) >> 6), ~0ULL);
      return;
    }
    words_[begin >> 6] |= ((1ULL << count) - 1) << (begin & 63);
  }

 private:
  std::vector<std::uint64_t> words_;
};

template <class Source>
[[noreturn]] void corrupt(const Source& src, const std::string& what) {
  throw Error(ErrorKind::kCorruptStream, what + " (" + src.name() + " nibble " +
                                             std::to_string(src.consumed() - 1) + ")");
}

}  // namespace detail

/// Decodes a brick in place to target level `target` into `out`, which must
/// hold 8^(N - target) labels. Output layout is Morton order of level
/// `target`. Decoding to target >= 1 never reads from `detail`.
template <class CoarseSource, class DetailSource>
void decode_brick_into(std::span<const Label> palette, bool constant, CoarseSource& coarse,
                       DetailSource& detail, int target, const BrickConfig& config,
                       std::span<Label> out) {
  const int n = config.max_level();
  if (palette.empty()) throw Error(ErrorKind::kCorruptStream, "empty palette");
  if (target < 0 || target > n) {
    throw Error(ErrorKind::kConfiguration, "target level " + std::to_string(target) +
                                               " outside [0, " + std::to_string(n) + "]");
  }
  if (out.size() != config.level_nodes(target)) {
    throw Error(ErrorKind::kInputShape, "output holds " + std::to_string(out.size()) +
                                            " labels, expected " +
                                            std::to_string(config.level_nodes(target)));
  }
  if (constant || target == n) {
    std::fill(out.begin(), out.end(), palette[0]);
    return;
  }

  detail::SlotBits filled(out.size());
  std::size_t last_used = 0;
  out[0] = palette[0];

  auto run_level = [&](auto& src, int l) {
    const int child_level = l - 1;
    const std::uint64_t child_block = std::uint64_t{1} << (3 * (child_level - target));
    const std::uint64_t node_block = child_block * 8;
    const std::uint64_t nodes = config.level_nodes(l);
    for (std::uint64_t m = 0; m < nodes; ++m) {
      const std::uint64_t s = m * node_block;
      if (filled.test(s + 7 * child_block)) continue;
      const Label parent = out[s];
      for (std::uint64_t c = 0; c < 8; ++c) {
        const std::uint64_t child = 8 * m + c;
        const std::uint64_t j = s + c * child_block;
        const std::uint8_t nib = src.next();
        Label label = 0;
        switch (nibble_opcode(nib)) {
          case 0:
            label = parent;
            break;
          case 1:
          case 2:
          case 3: {
            const auto nb = outside_neighbor_index(child, child_level,
                                                   static_cast<Axis>(nibble_opcode(nib) - 1), config);
            if (!nb) detail::corrupt(src, "neighbor reuse leaves the brick");
            label = *nb < child ? out[*nb * child_block] : out[(*nb >> 3) * node_block];
            break;
          }
          case 4:
            label = palette[last_used];
            break;
          case 5: {
            const int delta = src.next();
            const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(last_used) - delta - 1;
            if (idx < 0) detail::corrupt(src, "palette back reference before palette start");
            label = palette[static_cast<std::size_t>(idx)];
            break;
          }
          case 6:
            if (last_used + 1 >= palette.size()) detail::corrupt(src, "palette advance past end");
            label = palette[++last_used];
            break;
          default:
            detail::corrupt(src, "invalid opcode 7");
        }
        out[j] = label;
        if (nibble_stop(nib)) {
          if (child_level == 0) detail::corrupt(src, "stop bit on a level-0 node");
          std::fill(out.begin() + static_cast<std::ptrdiff_t>(j),
                    out.begin() + static_cast<std::ptrdiff_t>(j + child_block), label);
          filled.set_block(j, child_block);
        }
      }
    }
  };

  for (int l = n; l > target; --l) {
    if (l == 1) {
      run_level(detail, l);
    } else {
      run_level(coarse, l);
    }
  }
}

/// Decodes a fully resident encoding to level `target` and verifies that
/// every stream that had to be read completely was consumed exactly.
inline std::vector<Label> decode_brick(const BrickEncoding& enc, int target,
                                       const BrickConfig& config) {
  config.validate();
  if (target < 0 || target > config.max_level()) {
    throw Error(ErrorKind::kConfiguration, "target level " + std::to_string(target) +
                                               " outside [0, " +
                                               std::to_string(config.max_level()) + "]");
  }
  std::vector<Label> out(config.level_nodes(target));
  NibbleSpanSource coarse(enc.coarse, "coarse");
  NibbleSpanSource detail(enc.detail, "detail");
  decode_brick_into(std::span<const Label>(enc.palette), enc.is_constant(), coarse, detail,
                    target, config, std::span<Label>(out));
  if (!enc.is_constant() && target < config.max_level()) {
    if (target <= 1 && coarse.consumed() != enc.coarse.size()) {
      throw Error(ErrorKind::kCorruptStream,
                  "coarse stream has " + std::to_string(enc.coarse.size() - coarse.consumed()) +
                      " trailing nibbles");
    }
    if (target == 0 && detail.consumed() != enc.detail.size()) {
      throw Error(ErrorKind::kCorruptStream,
                  "detail stream has " + std::to_string(enc.detail.size() - detail.consumed()) +
                      " trailing nibbles");
    }
  }
  return out;
}

/// Coarsest representation of a brick, available without touching any stream.
inline Label decode_root(std::span<const Label> palette) {
  if (palette.empty()) throw Error(ErrorKind::kCorruptStream, "empty palette");
  return palette[0];
}

inline Label decode_root(const BrickEncoding& enc) { return decode_root(enc.palette); }

}  // namespace csvol

#endif  // CSVOL_BRICK_CODEC_HPP
