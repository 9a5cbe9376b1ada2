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

#ifndef CSVOL_STATS_HPP
#define CSVOL_STATS_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csvol/brick_codec.hpp"
#include "csvol/container.hpp"

namespace csvol {

/// Log-scale histogram bin: bricks whose per-brick rate r satisfies
/// 10^lower <= r < 10^(lower + kCrBinWidth). Rates of exactly zero go to
/// the lowest bin.
inline constexpr double kCrBinWidth = 0.25;
inline constexpr double kCrBinLowest = -6.0;
inline constexpr int kCrBinCount = 28;  // covers [1e-6, 10)

struct StatsReport {
  std::uint64_t bricks = 0;
  std::uint64_t homogeneous_bricks = 0;
  std::uint64_t original_bytes = 0;
  std::uint64_t compressed_bytes = 0;
  std::uint64_t palette_bytes = 0;
  std::uint64_t coarse_bytes = 0;
  std::uint64_t detail_bytes = 0;
  double compression_rate = 0;

  std::array<std::uint64_t, kOpCodeCount> op_counts{};
  std::uint64_t total_ops = 0;
  std::uint64_t delta_payloads = 0;

  std::array<std::uint64_t, kCrBinCount> brick_cr_histogram{};
  double worst_brick_cr = 0;
  std::map<std::uint64_t, std::uint64_t> duplicate_histogram;  // duplicates -> bricks
  double mean_duplicates = 0;

  double op_frequency(OpCode op) const {
    return total_ops == 0 ? 0.0
                          : static_cast<double>(op_counts[static_cast<int>(op)]) / total_ops;
  }
  /// Share of R_p, R_x, R_y and R_z among all operations.
  double reference_fraction() const {
    return op_frequency(OpCode::kParent) + op_frequency(OpCode::kNeighborX) +
           op_frequency(OpCode::kNeighborY) + op_frequency(OpCode::kNeighborZ);
  }
};

inline int cr_bin(double rate) {
  if (rate <= 0) return 0;
  const int bin = static_cast<int>(std::floor((std::log10(rate) - kCrBinLowest) / kCrBinWidth));
  return std::clamp(bin, 0, kCrBinCount - 1);
}

namespace detail {

inline void count_ops(std::span<const std::uint8_t> nibbles, StatsReport& s) {
  for (std::size_t i = 0; i < nibbles.size(); ++i) {
    const int op = nibble_opcode(nibbles[i]);
    if (op >= kOpCodeCount) continue;
    ++s.op_counts[op];
    ++s.total_ops;
    if (op == static_cast<int>(OpCode::kPaletteDelta)) {
      ++i;
      ++s.delta_payloads;
    }
  }
}

inline std::vector<std::uint8_t> stream_nibbles(const Container& c, std::span<const std::uint8_t> bytes,
                                                std::uint64_t count, const FrequencyTable& table) {
  if (count == 0) return {};
  if (c.entropy_coded()) return rans_decode(bytes, table, count);
  std::vector<std::uint8_t> out(count);
  PackedNibbleSource src(bytes, count, "raw");
  for (auto& v : out) v = src.next();
  return out;
}

}  // namespace detail

inline StatsReport compute_stats(const Container& c) {
  StatsReport s;
  const auto& meta = c.meta();
  s.bricks = c.brick_count();
  s.original_bytes = meta.original_bytes();
  s.compressed_bytes = c.serialized_size();
  s.compression_rate = c.compression_rate();
  const double brick_bytes = static_cast<double>(meta.config.voxels() * (meta.label_width / 8));
  std::uint64_t duplicate_total = 0;
  for (std::uint64_t b = 0; b < c.brick_count(); ++b) {
    const auto& r = c.record(b);
    if (r.is_constant()) ++s.homogeneous_bricks;
    s.palette_bytes += 4ULL * r.palette_length;
    s.coarse_bytes += r.coarse_bytes;
    s.detail_bytes += r.detail_bytes;
    const double rate = (4.0 * r.palette_length + r.coarse_bytes + r.detail_bytes) / brick_bytes;
    ++s.brick_cr_histogram[cr_bin(rate)];
    s.worst_brick_cr = std::max(s.worst_brick_cr, rate);

    const auto pal = c.palette(b);
    std::vector<Label> sorted(pal.begin(), pal.end());
    std::sort(sorted.begin(), sorted.end());
    const auto distinct = static_cast<std::uint64_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    const std::uint64_t dup = pal.size() - distinct;
    ++s.duplicate_histogram[dup];
    duplicate_total += dup;

    detail::count_ops(detail::stream_nibbles(c, c.coarse_stream(b), r.coarse_nibbles, c.tables().interior), s);
    if (c.detail_resident()) {
      detail::count_ops(detail::stream_nibbles(c, c.detail_stream(b), r.detail_nibbles, c.tables().leaf), s);
    }
  }
  s.mean_duplicates = s.bricks == 0 ? 0.0 : static_cast<double>(duplicate_total) / s.bricks;
  return s;
}

/// One `key=value` per line.
inline std::string stats_to_kv(const StatsReport& s) {
  std::ostringstream o;
  o << std::setprecision(9);
  o << "bricks=" << s.bricks << '\n'
    << "homogeneous_bricks=" << s.homogeneous_bricks << '\n'
    << "original_bytes=" << s.original_bytes << '\n'
    << "compressed_bytes=" << s.compressed_bytes << '\n'
    << "palette_bytes=" << s.palette_bytes << '\n'
    << "coarse_bytes=" << s.coarse_bytes << '\n'
    << "detail_bytes=" << s.detail_bytes << '\n'
    << "cr=" << s.compression_rate << '\n'
    << "total_ops=" << s.total_ops << '\n'
    << "reference_fraction=" << s.reference_fraction() << '\n';
  for (int op = 0; op < kOpCodeCount; ++op) {
    o << "op." << op_name(static_cast<OpCode>(op)) << '=' << s.op_frequency(static_cast<OpCode>(op))
      << '\n';
  }
  o << "worst_brick_cr=" << s.worst_brick_cr << '\n';
  for (int b = 0; b < kCrBinCount; ++b) {
    if (s.brick_cr_histogram[b] == 0) continue;
    o << "brick_cr_hist." << (kCrBinLowest + b * kCrBinWidth) << '=' << s.brick_cr_histogram[b] << '\n';
  }
  o << "mean_duplicates=" << s.mean_duplicates << '\n';
  for (const auto& [dup, n] : s.duplicate_histogram) o << "duplicates." << dup << '=' << n << '\n';
  return o.str();
}

inline std::string stats_to_text(const StatsReport& s) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3);
  o << "bricks              " << s.bricks << " (" << s.homogeneous_bricks << " homogeneous, "
    << (s.bricks ? 100.0 * s.homogeneous_bricks / s.bricks : 0.0) << "%)\n"
    << "original size       " << s.original_bytes << " bytes\n"
    << "compressed size     " << s.compressed_bytes << " bytes\n"
    << "compression rate    " << 100.0 * s.compression_rate << "%\n"
    << "  palettes          " << s.palette_bytes << " bytes\n"
    << "  coarse streams    " << s.coarse_bytes << " bytes\n"
    << "  detail streams    " << s.detail_bytes << " bytes\n"
    << "\noperation frequencies (" << s.total_ops << " ops)\n";
  for (int op = 0; op < kOpCodeCount; ++op) {
    const double f = s.op_frequency(static_cast<OpCode>(op));
    o << "  " << std::left << std::setw(8) << op_name(static_cast<OpCode>(op)) << std::right
      << std::setw(8) << 100.0 * f << "%  " << std::string(static_cast<int>(f * 50 + 0.5), '#') << '\n';
  }
  o << "  reference ops     " << 100.0 * s.reference_fraction() << "%\n";
  o << "\nper-brick compression rate (log10 bins), worst " << 100.0 * s.worst_brick_cr << "%\n";
  for (int b = 0; b < kCrBinCount; ++b) {
    if (s.brick_cr_histogram[b] == 0) continue;
    o << "  [1e" << std::setprecision(2) << std::setw(5) << (kCrBinLowest + b * kCrBinWidth) << ", 1e"
      << std::setw(5) << (kCrBinLowest + (b + 1) * kCrBinWidth) << ")  " << s.brick_cr_histogram[b] << '\n';
  }
  o << std::setprecision(3) << "\npalette duplicates per brick, mean " << s.mean_duplicates << '\n';
  for (const auto& [dup, n] : s.duplicate_histogram) o << "  " << std::setw(6) << dup << "  " << n << '\n';
  return o.str();
}

}  // namespace csvol

#endif  // CSVOL_STATS_HPP
