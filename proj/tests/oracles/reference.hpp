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

// Test-only reference implementations. None of these share code paths with
// the library beyond plain types.

#ifndef CSVOL_TESTS_ORACLES_REFERENCE_HPP
#define CSVOL_TESTS_ORACLES_REFERENCE_HPP

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <vector>

namespace oracle {

/// Bit-by-bit interleave, x in the lowest position of each 3-bit group.
inline std::uint64_t interleave(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  std::uint64_t out = 0;
  for (int bit = 0; bit < 21; ++bit) {
    out |= std::uint64_t((x >> bit) & 1) << (3 * bit);
    out |= std::uint64_t((y >> bit) & 1) << (3 * bit + 1);
    out |= std::uint64_t((z >> bit) & 1) << (3 * bit + 2);
  }
  return out;
}

/// Dense x-fastest cube.
struct Cube {
  int side = 0;
  std::vector<std::uint32_t> v;
  std::uint32_t at(int x, int y, int z) const { return v[(std::size_t(z) * side + y) * side + x]; }
};

/// Label of node (x, y, z) on `level`, computed recursively from level 0:
/// most frequent child label, ties to the child that comes first when the
/// children are listed as (cx, cy, cz) with cx varying fastest.
inline std::uint32_t node_label(const Cube& leaf, int level, int x, int y, int z) {
  if (level == 0) return leaf.at(x, y, z);
  std::array<std::uint32_t, 8> kids{};
  for (int cz = 0; cz < 2; ++cz)
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx)
        kids[cx + 2 * cy + 4 * cz] = node_label(leaf, level - 1, 2 * x + cx, 2 * y + cy, 2 * z + cz);
  std::map<std::uint32_t, int> count;
  for (auto k : kids) ++count[k];
  int best = -1;
  std::uint32_t label = 0;
  for (auto k : kids) {
    if (count[k] > best) {
      best = count[k];
      label = k;
    }
  }
  return label;
}

/// Full level grid, x-fastest.
inline Cube level_grid(const Cube& leaf, int level) {
  Cube out;
  out.side = leaf.side >> level;
  out.v.resize(std::size_t(out.side) * out.side * out.side);
  for (int z = 0; z < out.side; ++z)
    for (int y = 0; y < out.side; ++y)
      for (int x = 0; x < out.side; ++x)
        out.v[(std::size_t(z) * out.side + y) * out.side + x] = node_label(leaf, level, x, y, z);
  return out;
}

/// Iterative level-by-level variant of the above for bigger inputs; still
/// x-fastest and independent of Morton layout.
inline Cube downsample_once(const Cube& in) {
  Cube out;
  out.side = in.side / 2;
  out.v.resize(std::size_t(out.side) * out.side * out.side);
  for (int z = 0; z < out.side; ++z)
    for (int y = 0; y < out.side; ++y)
      for (int x = 0; x < out.side; ++x) {
        std::array<std::uint32_t, 8> kids{};
        for (int c = 0; c < 8; ++c) kids[c] = in.at(2 * x + (c & 1), 2 * y + ((c >> 1) & 1), 2 * z + (c >> 2));
        int best = 0;
        std::uint32_t label = kids[0];
        for (int i = 0; i < 8; ++i) {
          int n = 0;
          for (int j = 0; j < 8; ++j) n += kids[j] == kids[i];
          if (n > best) {
            best = n;
            label = kids[i];
          }
        }
        out.v[(std::size_t(z) * out.side + y) * out.side + x] = label;
      }
  return out;
}

/// Straightforward rANS: 32-bit state in a 64-bit variable, L = 2^23,
/// byte renormalization, 12-bit precision. Output is the final state
/// (little-endian) followed by the renormalization bytes in decode order.
struct ScalarRans {
  std::array<std::uint32_t, 16> freq{};

  std::uint32_t start(int s) const {
    std::uint32_t c = 0;
    for (int k = 0; k < s; ++k) c += freq[k];
    return c;
  }

  std::vector<std::uint8_t> encode(const std::vector<std::uint8_t>& symbols) const {
    const std::uint64_t lower = 1ULL << 23;
    std::uint64_t state = lower;
    std::deque<std::uint8_t> bytes;
    for (auto it = symbols.rbegin(); it != symbols.rend(); ++it) {
      const std::uint64_t f = freq[*it];
      const std::uint64_t limit = ((lower >> 12) << 8) * f;
      while (state >= limit) {
        bytes.push_front(static_cast<std::uint8_t>(state % 256));
        state /= 256;
      }
      state = (state / f) * 4096 + state % f + start(*it);
    }
    std::vector<std::uint8_t> out;
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((state >> (8 * k)) & 0xFF));
    out.insert(out.end(), bytes.begin(), bytes.end());
    return out;
  }

  std::vector<std::uint8_t> decode(const std::vector<std::uint8_t>& in, std::size_t count) const {
    std::uint64_t state = 0;
    for (int k = 0; k < 4; ++k) state |= std::uint64_t(in[k]) << (8 * k);
    std::size_t pos = 4;
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t slot = state % 4096;
      int s = 0;
      while (start(s + 1) <= slot) ++s;
      state = freq[s] * (state / 4096) + slot - start(s);
      while (state < (1ULL << 23)) state = state * 256 + in[pos++];
      out.push_back(static_cast<std::uint8_t>(s));
    }
    return out;
  }
};

}  // namespace oracle

#endif  // CSVOL_TESTS_ORACLES_REFERENCE_HPP
