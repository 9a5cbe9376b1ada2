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

#ifndef CSVOL_TESTS_TEST_UTIL_HPP
#define CSVOL_TESTS_TEST_UTIL_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "csvol/core_indexing.hpp"
#include "csvol/entropy_rans.hpp"
#include "oracles/reference.hpp"

namespace testutil {

inline std::vector<csvol::Label> to_morton(const oracle::Cube& c) {
  std::vector<csvol::Label> out(c.v.size());
  for (int z = 0; z < c.side; ++z)
    for (int y = 0; y < c.side; ++y)
      for (int x = 0; x < c.side; ++x) out[csvol::morton_encode(x, y, z)] = c.at(x, y, z);
  return out;
}

/// Piece-wise constant brick: nearest of `regions` random seeds, labels drawn
/// from a sparse 32-bit range. `noise` is the chance of a random voxel label.
inline oracle::Cube blob_cube(std::mt19937_64& rng, int side, int regions, double noise = 0.0) {
  struct Seed { int x, y, z; std::uint32_t label; };
  std::vector<Seed> seeds;
  std::uniform_int_distribution<int> coord(0, side - 1);
  for (int r = 0; r < regions; ++r) {
    seeds.push_back({coord(rng), coord(rng), coord(rng), static_cast<std::uint32_t>(rng())});
  }
  std::uniform_real_distribution<double> u(0, 1);
  oracle::Cube c;
  c.side = side;
  c.v.resize(std::size_t(side) * side * side);
  for (int z = 0; z < side; ++z)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        int best = 0;
        long best_d = 1L << 40;
        for (int s = 0; s < regions; ++s) {
          const long dx = x - seeds[s].x, dy = y - seeds[s].y, dz = z - seeds[s].z;
          const long d = dx * dx + dy * dy + dz * dz;
          if (d < best_d) {
            best_d = d;
            best = s;
          }
        }
        std::uint32_t label = seeds[best].label;
        if (noise > 0 && u(rng) < noise) label = seeds[rng() % regions].label;
        c.v[(std::size_t(z) * side + y) * side + x] = label;
      }
  return c;
}

/// Random valid table: every symbol in `live` gets at least one slot.
inline csvol::FrequencyTable random_table(std::mt19937_64& rng, std::uint32_t live_mask) {
  std::array<std::uint32_t, 16> w{};
  std::uint32_t total = 0;
  for (int s = 0; s < 16; ++s) {
    if (live_mask & (1u << s)) {
      w[s] = 1 + static_cast<std::uint32_t>(rng() % 1000);
      if (rng() % 4 == 0) w[s] *= 50;
      total += w[s];
    }
  }
  std::array<std::uint16_t, 16> c{};
  std::uint32_t sum = 0;
  int last = -1;
  for (int s = 0; s < 16; ++s) {
    if (!w[s]) continue;
    c[s] = static_cast<std::uint16_t>(std::max<std::uint64_t>(1, std::uint64_t(w[s]) * 3000 / total));
    sum += c[s];
    last = s;
  }
  c[last] = static_cast<std::uint16_t>(c[last] + (4096 - sum));
  return csvol::FrequencyTable(c);
}

inline std::vector<std::uint8_t> draw(std::mt19937_64& rng, const csvol::FrequencyTable& t, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (auto& v : out) v = t.symbol_at(static_cast<std::uint32_t>(rng() % 4096));
  return out;
}

inline oracle::ScalarRans reference_for(const csvol::FrequencyTable& t) {
  oracle::ScalarRans r;
  for (int s = 0; s < 16; ++s) r.freq[s] = t.count(s);
  return r;
}

}  // namespace testutil

#endif  // CSVOL_TESTS_TEST_UTIL_HPP
