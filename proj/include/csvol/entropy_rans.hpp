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

// Range asymmetric numeral systems over the 16-symbol nibble alphabet.
//
// Parameters: 32-bit state, lower renormalization bound 2^23, byte-wise
// renormalization, 12-bit frequency precision. Symbols are encoded back to
// front so that decoding runs forward. An encoded stream is the final encoder
// state as 4 little-endian bytes followed by the renormalization bytes in the
// order the decoder consumes them.

#ifndef CSVOL_ENTROPY_RANS_HPP
#define CSVOL_ENTROPY_RANS_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "csvol/error.hpp"

namespace csvol {

inline constexpr int kSymbolCount = 16;
inline constexpr int kProbBits = 12;
inline constexpr std::uint32_t kProbScale = 1U << kProbBits;
inline constexpr std::uint32_t kRansLowerBound = 1U << 23;

class FrequencyTable {
 public:
  FrequencyTable() : FrequencyTable(uniform_counts()) {}

  explicit FrequencyTable(const std::array<std::uint16_t, kSymbolCount>& counts) : counts_(counts) {
    std::uint32_t sum = 0;
    for (int s = 0; s < kSymbolCount; ++s) {
      cumulative_[s] = static_cast<std::uint16_t>(sum);
      sum += counts_[s];
      if (sum > kProbScale) break;
    }
    if (sum != kProbScale) {
      throw Error(ErrorKind::kConfiguration,
                  "frequency counts sum to " + std::to_string(sum) + ", expected 4096");
    }
    cumulative_[kSymbolCount] = static_cast<std::uint16_t>(kProbScale);
    for (int s = 0; s < kSymbolCount; ++s) {
      std::fill_n(slot_symbol_.begin() + cumulative_[s], counts_[s], static_cast<std::uint8_t>(s));
    }
  }

  static std::array<std::uint16_t, kSymbolCount> uniform_counts() {
    std::array<std::uint16_t, kSymbolCount> c{};
    c.fill(kProbScale / kSymbolCount);
    return c;
  }

  std::uint32_t count(int symbol) const { return counts_[symbol]; }
  /// Start of the symbol's slot range; cumulative(16) == 4096.
  std::uint32_t cumulative(int symbol) const { return cumulative_[symbol]; }
  std::uint8_t symbol_at(std::uint32_t slot) const { return slot_symbol_[slot]; }
  const std::array<std::uint16_t, kSymbolCount>& counts() const { return counts_; }

  friend bool operator==(const FrequencyTable& a, const FrequencyTable& b) {
    return a.counts_ == b.counts_;
  }

 private:
  std::array<std::uint16_t, kSymbolCount> counts_{};
  std::array<std::uint16_t, kSymbolCount + 1> cumulative_{};
  std::array<std::uint8_t, kProbScale> slot_symbol_{};
};

/// Interior table codes levels N..1 (coarse stream), leaf table level 0.
struct TablePair {
  FrequencyTable interior;
  FrequencyTable leaf;

  friend bool operator==(const TablePair&, const TablePair&) = default;
};

using SymbolHistogram = std::array<std::uint64_t, kSymbolCount>;

inline void accumulate_histogram(SymbolHistogram& hist, std::span<const std::uint8_t> nibbles) {
  for (std::uint8_t v : nibbles) ++hist[v & 0xFU];
}

/// Adds one to every symbol, then scales to 4096 with largest-remainder
/// rounding (ties to the lower symbol). Symbols that round to zero are raised
/// to one at the expense of the currently largest count.
inline FrequencyTable quantize_histogram(const SymbolHistogram& raw) {
  std::array<std::uint64_t, kSymbolCount> smoothed{};
  unsigned __int128 total = 0;
  for (int s = 0; s < kSymbolCount; ++s) {
    smoothed[s] = raw[s] + 1;
    total += smoothed[s];
  }
  std::array<std::uint32_t, kSymbolCount> q{};
  std::array<unsigned __int128, kSymbolCount> rem{};
  std::uint32_t assigned = 0;
  for (int s = 0; s < kSymbolCount; ++s) {
    const unsigned __int128 scaled = static_cast<unsigned __int128>(smoothed[s]) * kProbScale;
    q[s] = static_cast<std::uint32_t>(scaled / total);
    rem[s] = scaled % total;
    assigned += q[s];
  }
  std::array<int, kSymbolCount> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::uint32_t i = 0; assigned < kProbScale; ++i, ++assigned) ++q[order[i % kSymbolCount]];

  for (int s = 0; s < kSymbolCount; ++s) {
    if (q[s] != 0) continue;
    int largest = 0;
    for (int k = 1; k < kSymbolCount; ++k) {
      if (q[k] > q[largest]) largest = k;
    }
    --q[largest];
    q[s] = 1;
  }
  std::array<std::uint16_t, kSymbolCount> counts{};
  for (int s = 0; s < kSymbolCount; ++s) counts[s] = static_cast<std::uint16_t>(q[s]);
  return FrequencyTable(counts);
}

/// Builds both tables from the nibble streams of the sampled bricks.
/// `interior` and `leaf` are parallel lists of per-brick coarse/detail streams.
inline TablePair build_frequency_tables(std::span<const std::vector<std::uint8_t>> interior,
                                        std::span<const std::vector<std::uint8_t>> leaf) {
  if (interior.empty() && leaf.empty()) {
    throw Error(ErrorKind::kConfiguration, "frequency prepass needs at least one sampled brick");
  }
  SymbolHistogram hi{};
  SymbolHistogram hl{};
  for (const auto& s : interior) accumulate_histogram(hi, s);
  for (const auto& s : leaf) accumulate_histogram(hl, s);
  return {quantize_histogram(hi), quantize_histogram(hl)};
}

inline std::vector<std::uint8_t> rans_encode(std::span<const std::uint8_t> nibbles,
                                             const FrequencyTable& table) {
  std::vector<std::uint8_t> reversed;
  reversed.reserve(nibbles.size() / 2 + 8);
  std::uint32_t x = kRansLowerBound;
  for (std::size_t i = nibbles.size(); i-- > 0;) {
    const int s = nibbles[i] & 0xF;
    const std::uint32_t freq = table.count(s);
    if (freq == 0) {
      throw Error(ErrorKind::kEncodability, "symbol " + std::to_string(s) + " at position " +
                                                std::to_string(i) + " has zero frequency");
    }
    const std::uint32_t x_max = ((kRansLowerBound >> kProbBits) << 8) * freq;
    while (x >= x_max) {
      reversed.push_back(static_cast<std::uint8_t>(x & 0xFF));
      x >>= 8;
    }
    x = ((x / freq) << kProbBits) + (x % freq) + table.cumulative(s);
  }
  std::vector<std::uint8_t> out(4 + reversed.size());
  for (int k = 0; k < 4; ++k) out[k] = static_cast<std::uint8_t>(x >> (8 * k));
  std::copy(reversed.rbegin(), reversed.rend(), out.begin() + 4);
  return out;
}

/// Forward, pull-based decoder for one stream of `symbol_count` nibbles.
/// Stops wherever the consumer stops, so prefixes decode without touching
/// the rest of the stream.
class RansNibbleSource {
 public:
  RansNibbleSource(std::span<const std::uint8_t> bytes, const FrequencyTable& table,
                   std::uint64_t symbol_count, const char* name = "rans")
      : bytes_(bytes), table_(&table), remaining_(symbol_count), name_(name) {
    if (symbol_count == 0 && bytes.empty()) return;
    if (bytes.size() < 4) {
      throw Error(ErrorKind::kCorruptStream,
                  std::string(name_) + " stream shorter than its 4-byte state");
    }
    state_ = std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
             (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
    pos_ = 4;
    if (state_ < kRansLowerBound) {
      throw Error(ErrorKind::kCorruptStream, std::string(name_) + " stream has an invalid state");
    }
  }

  std::uint8_t next() {
    if (remaining_ == 0) {
      throw Error(ErrorKind::kCorruptStream,
                  std::string(name_) + " stream underrun at nibble " + std::to_string(consumed_));
    }
    const std::uint32_t slot = state_ & (kProbScale - 1);
    const std::uint8_t s = table_->symbol_at(slot);
    state_ = table_->count(s) * (state_ >> kProbBits) + slot - table_->cumulative(s);
    while (state_ < kRansLowerBound) {
      if (pos_ >= bytes_.size()) {
        throw Error(ErrorKind::kCorruptStream, std::string(name_) + " stream ran out of bytes at nibble " +
                                                   std::to_string(consumed_));
      }
      state_ = (state_ << 8) | bytes_[pos_++];
    }
    --remaining_;
    ++consumed_;
    return s;
  }

  std::uint64_t consumed() const { return consumed_; }
  std::uint64_t remaining() const { return remaining_; }
  const char* name() const { return name_; }

  /// After the last symbol the state must be back at its initial value and
  /// every byte consumed.
  void finish() const {
    if (remaining_ != 0) {
      throw Error(ErrorKind::kCorruptStream, std::string(name_) + " stream has " +
                                                 std::to_string(remaining_) + " undecoded nibbles");
    }
    if (bytes_.empty()) return;
    if (state_ != kRansLowerBound || pos_ != bytes_.size()) {
      throw Error(ErrorKind::kCorruptStream,
                  std::string(name_) + " stream state desynchronized after " +
                      std::to_string(consumed_) + " nibbles");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  const FrequencyTable* table_;
  std::uint64_t remaining_;
  const char* name_;
  std::uint64_t consumed_ = 0;
  std::size_t pos_ = 0;
  std::uint32_t state_ = kRansLowerBound;
};

inline std::vector<std::uint8_t> rans_decode(std::span<const std::uint8_t> bytes,
                                             const FrequencyTable& table, std::uint64_t count) {
  RansNibbleSource src(bytes, table, count);
  std::vector<std::uint8_t> out(count);
  for (auto& v : out) v = src.next();
  src.finish();
  return out;
}

}  // namespace csvol

#endif  // CSVOL_ENTROPY_RANS_HPP
