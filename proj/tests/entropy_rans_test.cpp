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

#include "csvol/entropy_rans.hpp"
#include "oracles/reference.hpp"
#include "test_util.hpp"

using namespace csvol;

using testutil::draw;
using testutil::random_table;
using testutil::reference_for;

TEST(FrequencyTableTest, RejectsBadSums) {
  std::array<std::uint16_t, 16> c{};
  c[0] = 4095;
  EXPECT_THROW(FrequencyTable{c}, Error);
  c[1] = 1;
  const FrequencyTable t(c);
  EXPECT_EQ(t.cumulative(16), 4096u);
  EXPECT_EQ(t.symbol_at(4095), 1);
  EXPECT_EQ(t.symbol_at(0), 0);
}

TEST(FrequencyTableTest, SmoothingKeepsEverySymbolEncodable) {
  SymbolHistogram h{};
  h[0] = 1'000'000;
  const auto t = quantize_histogram(h);
  std::uint32_t sum = 0;
  for (int s = 0; s < 16; ++s) {
    EXPECT_GE(t.count(s), 1u);
    sum += t.count(s);
  }
  EXPECT_EQ(sum, 4096u);
  EXPECT_EQ(t.count(0), 4096u - 15u);
}

TEST(FrequencyTableTest, UniformNibblesQuantizeNear256) {
  std::mt19937_64 rng(2024);
  SymbolHistogram h{};
  for (int i = 0; i < 10'000'000; ++i) ++h[rng() & 0xF];
  const auto t = quantize_histogram(h);
  for (int s = 0; s < 16; ++s) EXPECT_NEAR(static_cast<double>(t.count(s)), 256.0, 2.0) << s;
}

TEST(FrequencyTableTest, TwoSymbolStream) {
  // 75% / 25% over 100000 nibbles. Expected counts computed offline with
  // exact rational arithmetic: shares 75001*4096/100016 and 25001*4096/100016,
  // largest remainders, then 14 symbols raised to one from the largest.
  SymbolHistogram h{};
  h[0] = 75'000;
  h[6] = 25'000;
  const auto t = quantize_histogram(h);
  EXPECT_EQ(t.count(0), 3058u);
  EXPECT_EQ(t.count(6), 1024u);
  int ones = 0;
  for (int s = 0; s < 16; ++s) ones += t.count(s) == 1;
  EXPECT_EQ(ones, 14);
  EXPECT_NEAR(static_cast<double>(t.count(0)), 3059.0, 2.0);
  EXPECT_NEAR(static_cast<double>(t.count(6)), 1023.0, 2.0);
}

TEST(FrequencyTableTest, QuantizationPreservesOrder) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    SymbolHistogram h{};
    const int scale = 1 + static_cast<int>(rng() % 100000);
    for (auto& v : h) v = rng() % scale;
    const auto t = quantize_histogram(h);
    for (int a = 0; a < 16; ++a) {
      for (int b = 0; b < 16; ++b) {
        if (h[a] > h[b]) {
          // Largest-remainder rounding may put a tie-broken pair one apart.
          ASSERT_GE(static_cast<int>(t.count(a)) + 1, static_cast<int>(t.count(b)))
              << "trial " << trial << " " << a << " vs " << b;
        }
      }
    }
  }
}

TEST(FrequencyTableTest, BuildRequiresSamples) {
  std::vector<std::vector<std::uint8_t>> none;
  EXPECT_THROW(build_frequency_tables(none, none), Error);
  std::vector<std::vector<std::uint8_t>> interior{{0, 0, 0, 0, 8}};
  std::vector<std::vector<std::uint8_t>> leaf{{0, 1, 2}};
  const auto pair = build_frequency_tables(interior, leaf);
  EXPECT_GT(pair.interior.count(0), pair.interior.count(1));
  EXPECT_EQ(pair.leaf.count(0), pair.leaf.count(1));
}

TEST(RansTest, EmptyStreamIsStateOnly) {
  const FrequencyTable t;
  const auto bytes = rans_encode({}, t);
  ASSERT_EQ(bytes.size(), 4u);
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{0, 0, 0x80, 0}));
  RansNibbleSource src(bytes, t, 0);
  EXPECT_NO_THROW(src.finish());
  EXPECT_THROW(src.next(), Error);
}

TEST(RansTest, MillionUniformNibblesRoundTrip) {
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> s(1'000'000);
  for (auto& v : s) v = rng() & 0xF;
  const FrequencyTable t;
  const auto bytes = rans_encode(s, t);
  EXPECT_EQ(rans_decode(bytes, t, s.size()), s);
  EXPECT_EQ(rans_encode(s, t), bytes);
  // Uniform symbols cost 4 bits each.
  EXPECT_NEAR(static_cast<double>(bytes.size()), 500'000.0, 16.0);
}

TEST(RansTest, ZeroFrequencySymbolRejected) {
  std::array<std::uint16_t, 16> c{};
  c[0] = 4096;
  const FrequencyTable t(c);
  const std::vector<std::uint8_t> s{0, 0, 3};
  try {
    rans_encode(s, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEncodability);
  }
}

TEST(RansTest, RandomizedRoundTripsAllTableShapes) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10'000; ++trial) {
    std::uint32_t mask = static_cast<std::uint32_t>(rng() & 0xFFFF);
    if (mask == 0) mask = 1;
    const auto t = random_table(rng, mask);
    const auto s = draw(rng, t, rng() % 300);
    const auto bytes = rans_encode(s, t);
    ASSERT_EQ(rans_decode(bytes, t, s.size()), s) << "trial " << trial;
  }
}

TEST(RansTest, ByteExactAgainstScalarReference) {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_table(rng, static_cast<std::uint32_t>(rng() | 1) & 0xFFFF);
    const auto s = draw(rng, t, 1 + rng() % 20000);
    const auto ref = reference_for(t);
    const auto expected = ref.encode(s);
    ASSERT_EQ(rans_encode(s, t), expected) << "trial " << trial;
    ASSERT_EQ(ref.decode(expected, s.size()), s);
  }
}

TEST(RansTest, PrefixDecodeMatchesFullDecode) {
  std::mt19937_64 rng(8);
  const auto t = random_table(rng, 0xFFFF);
  const auto s = draw(rng, t, 4000);
  const auto bytes = rans_encode(s, t);
  for (std::size_t k : {0u, 1u, 2u, 17u, 999u, 3999u, 4000u}) {
    RansNibbleSource src(bytes, t, s.size());
    for (std::size_t i = 0; i < k; ++i) ASSERT_EQ(src.next(), s[i]);
    EXPECT_EQ(src.consumed(), k);
  }
}

TEST(RansTest, WrongTableBreaksRoundTrip) {
  std::mt19937_64 rng(9);
  const auto t = random_table(rng, 0xFFFF);
  std::array<std::uint16_t, 16> skew{};
  skew.fill(16);
  skew[3] = 4096 - 15 * 16;
  const FrequencyTable wrong(skew);
  const auto s = draw(rng, t, 5000);
  const auto bytes = rans_encode(s, t);
  bool mismatch = false;
  try {
    mismatch = rans_decode(bytes, wrong, s.size()) != s;
  } catch (const Error&) {
    mismatch = true;
  }
  EXPECT_TRUE(mismatch);
}

TEST(RansTest, CorruptionDetected) {
  std::mt19937_64 rng(10);
  const auto t = random_table(rng, 0xFFFF);
  const auto s = draw(rng, t, 3000);
  auto bytes = rans_encode(s, t);
  // Too many symbols requested: either bytes run out or the final check fails.
  EXPECT_THROW(rans_decode(bytes, t, s.size() + 50), Error);
  // Fewer symbols than encoded: state does not return to its start value.
  EXPECT_THROW(rans_decode(bytes, t, s.size() - 1), Error);
  bytes.pop_back();
  EXPECT_THROW(rans_decode(bytes, t, s.size()), Error);
  EXPECT_THROW(RansNibbleSource(std::vector<std::uint8_t>{1, 2}, t, 4), Error);
}
