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

#include <gtest/gtest.h>

#include <random>

#include "csvol/pyramid.hpp"
#include "oracles/reference.hpp"

using namespace csvol;

namespace {

std::vector<Label> to_morton(const oracle::Cube& c) {
  std::vector<Label> out(c.v.size());
  for (int z = 0; z < c.side; ++z)
    for (int y = 0; y < c.side; ++y)
      for (int x = 0; x < c.side; ++x) out[morton_encode(x, y, z)] = c.at(x, y, z);
  return out;
}

oracle::Cube random_cube(std::mt19937& rng, int side, int alphabet) {
  oracle::Cube c;
  c.side = side;
  c.v.resize(std::size_t(side) * side * side);
  for (auto& v : c.v) v = rng() % alphabet;
  return c;
}

}  // namespace

TEST(PyramidTest, ConstantBrick) {
  const BrickConfig cfg(1);
  const std::vector<Label> brick(8, 5);
  const Pyramid p = build_pyramid(brick, cfg);
  EXPECT_EQ(p.root(), 5u);
  EXPECT_TRUE(p.constant(1, 0));
}

TEST(PyramidTest, TieGoesToFirstChild) {
  const BrickConfig cfg(1);
  const Pyramid p = build_pyramid(std::vector<Label>{5, 7, 7, 5, 5, 7, 7, 5}, cfg);
  EXPECT_EQ(p.root(), 5u);
  EXPECT_FALSE(p.constant(1, 0));
  const Pyramid q = build_pyramid(std::vector<Label>{1, 2, 2, 2, 3, 3, 3, 3}, cfg);
  EXPECT_EQ(q.root(), 3u);
  const Pyramid r = build_pyramid(std::vector<Label>{7, 5, 7, 5, 5, 7, 7, 5}, cfg);
  EXPECT_EQ(r.root(), 7u);
}

TEST(PyramidTest, InputShapeErrors) {
  EXPECT_THROW(build_pyramid(std::vector<Label>(7), BrickConfig(1)), Error);
  EXPECT_THROW(downsample_level(std::vector<Label>(27), 3), Error);
  EXPECT_THROW(downsample_level(std::vector<Label>(8), 4), Error);
  try {
    downsample_level(std::vector<Label>(1), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInputShape);
  }
}

TEST(PyramidTest, DownsampleConstantAndPlaneSplit) {
  const std::vector<Label> constant(64, 9);
  EXPECT_EQ(downsample_level(constant, 4), std::vector<Label>(8, 9));

  // 4^3 grid, label 1 for x < 2 and 2 otherwise.
  oracle::Cube c;
  c.side = 4;
  c.v.resize(64);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) c.v[(z * 4 + y) * 4 + x] = x < 2 ? 1 : 2;
  const auto half = downsample_level(to_morton(c), 4);
  for (std::uint64_t i = 0; i < 8; ++i) {
    EXPECT_EQ(half[i], morton_decode(i)[0] == 0 ? 1u : 2u);
  }
}

TEST(PyramidTest, DownsampleMatchesCountingOracle) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto cube = random_cube(rng, 8, 2 + trial % 4);
    const auto got = downsample_level(to_morton(cube), 8);
    ASSERT_EQ(got, to_morton(oracle::downsample_once(cube))) << "trial " << trial;
  }
}

TEST(PyramidTest, MatchesRecursiveReferenceOnRandomBricks) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 4;  // b in {2, 4, 8, 16}
    const BrickConfig cfg(n);
    const auto cube = random_cube(rng, cfg.side(), 2 + trial % 5);
    const Pyramid p = build_pyramid(to_morton(cube), cfg);
    oracle::Cube level = cube;
    for (int l = 0; l <= n; ++l) {
      if (l > 0) level = n <= 3 ? oracle::level_grid(cube, l) : oracle::downsample_once(level);
      const auto want = to_morton(level);
      const auto got = p.level(l);
      ASSERT_TRUE(std::equal(got.begin(), got.end(), want.begin(), want.end()))
          << "trial " << trial << " level " << l;
    }
  }
}

TEST(PyramidTest, ConstantFlagsMeanUniformSubtrees) {
  std::mt19937 rng(3);
  const BrickConfig cfg(4);
  for (int trial = 0; trial < 50; ++trial) {
    // Blocky input so that constant subtrees actually occur.
    oracle::Cube c;
    c.side = 16;
    c.v.resize(4096);
    const int block = 1 << (trial % 4);
    for (int z = 0; z < 16; ++z)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          const std::uint32_t h = (x / block) * 73856093u ^ (y / block) * 19349663u ^ (z / block) * 83492791u ^ trial;
          c.v[(z * 16 + y) * 16 + x] = h % 3;
        }
    const auto leaves = to_morton(c);
    const Pyramid p = build_pyramid(leaves, cfg);
    for (int l = 0; l <= 4; ++l) {
      const std::uint64_t span = std::uint64_t(1) << (3 * l);
      for (std::uint64_t i = 0; i < cfg.level_nodes(l); ++i) {
        bool uniform = true;
        for (std::uint64_t k = i * span; k < (i + 1) * span; ++k) uniform &= leaves[k] == leaves[i * span];
        ASSERT_EQ(p.constant(l, i), uniform);
        if (uniform) {
          ASSERT_EQ(p.label(l, i), leaves[i * span]);
        }
      }
    }
  }
}

TEST(PyramidTest, ExtraStorageIsAboutFourteenPercent) {
  const BrickConfig cfg(6);
  const Pyramid p = build_pyramid(std::vector<Label>(cfg.voxels(), 1), cfg);
  std::uint64_t extra = 0;
  for (int l = 1; l <= 6; ++l) extra += p.level(l).size();
  EXPECT_NEAR(static_cast<double>(extra) / cfg.voxels(), 1.0 / 7.0, 1e-3);
}

TEST(PyramidTest, Deterministic) {
  std::mt19937 rng(11);
  const BrickConfig cfg(4);
  const auto cube = random_cube(rng, 16, 6);
  const auto a = build_pyramid(to_morton(cube), cfg);
  const auto b = build_pyramid(to_morton(cube), cfg);
  for (int l = 0; l <= 4; ++l) {
    EXPECT_TRUE(std::equal(a.level(l).begin(), a.level(l).end(), b.level(l).begin()));
  }
}
