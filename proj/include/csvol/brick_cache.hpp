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

// Pool cache of decoded bricks. The pool is an array of base elements of
// 2^3 labels; a brick decoded to level l occupies a block of 8^(N-l-1)
// consecutive base elements. Freed blocks go onto a stack per level and are
// only ever reused for that level, until a rebuild wipes the pool.

#ifndef CSVOL_BRICK_CACHE_HPP
#define CSVOL_BRICK_CACHE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csvol/core_indexing.hpp"
#include "csvol/error.hpp"
#include "csvol/parallel.hpp"

namespace csvol {

inline constexpr std::uint64_t kBaseElementLabels = 8;
// 1 GiB of 32-bit labels.
inline constexpr std::uint64_t kDefaultPoolElements = (std::uint64_t{1} << 30) / (kBaseElementLabels * sizeof(Label));

struct Residency {
  std::uint64_t start = 0;  // first base element of the block
  int lod = 0;
  friend bool operator==(const Residency&, const Residency&) = default;
};

struct BrickRequest {
  std::uint64_t brick = 0;
  int lod = 0;
  friend bool operator==(const BrickRequest&, const BrickRequest&) = default;
  friend auto operator<=>(const BrickRequest&, const BrickRequest&) = default;
};

struct Placement {
  std::uint64_t brick = 0;
  int lod = 0;
  std::uint64_t start = 0;
};

struct CacheStats {
  std::uint64_t capacity_elements = 0;
  std::uint64_t top = 0;
  std::uint64_t active_elements = 0;
  std::uint64_t resident_bricks = 0;
  std::uint64_t placements = 0;
  std::uint64_t evictions = 0;
  std::uint64_t rebuilds = 0;
  std::uint64_t decoded_labels = 0;

  double occupancy() const {
    return capacity_elements == 0 ? 0.0 : double(active_elements) / double(capacity_elements);
  }
};

// Wall time of the last end_frame_assign, split into bookkeeping and the
// decode callbacks.
struct AssignTiming {
  double structure_ms = 0;
  double decode_ms = 0;
};

using BrickDecodeFn = std::function<void(std::uint64_t brick, int lod, std::span<Label> out)>;

class BrickCache {
 public:
  static constexpr std::uint8_t kInvisible = 0xFF;

  BrickCache(BrickConfig config, std::uint64_t brick_count,
             std::uint64_t capacity_elements = kDefaultPoolElements)
      : config_(config),
        capacity_(capacity_elements),
        residency_(brick_count),
        usage_(std::make_unique<std::atomic<std::uint8_t>[]>(brick_count)),
        brick_count_(brick_count),
        stacks_(static_cast<std::size_t>(config.max_level())) {
    config_.validate();
    if (capacity_ == 0) throw Error(ErrorKind::kConfiguration, "cache pool must hold at least one element");
    begin_frame();
  }

  const BrickConfig& config() const { return config_; }
  std::uint64_t brick_count() const { return brick_count_; }
  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t top() const { return top_; }

  /// Base elements in a block holding a brick decoded to `lod` (< N).
  std::uint64_t block_elements(int lod) const {
    return std::uint64_t{1} << (3 * (config_.max_level() - lod - 1));
  }

  void begin_frame() {
    for (std::uint64_t b = 0; b < brick_count_; ++b) usage_[b].store(kInvisible, std::memory_order_relaxed);
  }

  /// Safe to call from several render threads; all writers of one brick
  /// store the same value within a frame.
  void mark_used(std::uint64_t brick, int lod) {
    usage_[brick].store(static_cast<std::uint8_t>(lod), std::memory_order_relaxed);
  }

  std::optional<int> usage(std::uint64_t brick) const {
    const auto u = usage_[brick].load(std::memory_order_relaxed);
    if (u == kInvisible) return std::nullopt;
    return int(u);
  }

  std::uint64_t used_count() const {
    std::uint64_t n = 0;
    for (std::uint64_t b = 0; b < brick_count_; ++b) n += usage_[b].load(std::memory_order_relaxed) != kInvisible;
    return n;
  }

  std::optional<Residency> lookup(std::uint64_t brick) const { return residency_.at(brick); }

  /// Decoded labels of a resident brick, Morton order of its level.
  std::span<const Label> data(const Residency& r) const {
    return std::span<const Label>(storage_).subspan(r.start * kBaseElementLabels,
                                                    block_elements(r.lod) * kBaseElementLabels);
  }

  /// Used bricks that want a cacheable level they are not resident at,
  /// ascending by brick id.
  std::vector<BrickRequest> collect_requests() const {
    std::vector<BrickRequest> out;
    for (std::uint64_t b = 0; b < brick_count_; ++b) {
      const auto u = usage_[b].load(std::memory_order_relaxed);
      if (u == kInvisible || int(u) >= config_.max_level()) continue;
      if (residency_[b] && residency_[b]->lod == int(u)) continue;
      out.push_back({b, int(u)});
    }
    return out;
  }

  const std::vector<std::uint64_t>& free_stack(int lod) const { return stacks_.at(static_cast<std::size_t>(lod)); }

  /// Evicts bricks not used this frame (or wanted at another level), places
  /// every request and decodes the placed bricks on `workers` threads.
  /// Requests for lod N or for a brick already resident at that lod are
  /// ignored.
  std::vector<Placement> end_frame_assign(std::span<const BrickRequest> requests, const BrickDecodeFn& decode,
                                          unsigned workers = 1) {
    using Clock = std::chrono::steady_clock;
    const auto t_start = Clock::now();
    const int n = config_.max_level();
    std::vector<BrickRequest> todo;
    todo.reserve(requests.size());
    for (const auto& r : requests) {
      if (r.brick >= brick_count_) throw Error(ErrorKind::kConfiguration, "request for unknown brick " + std::to_string(r.brick));
      if (r.lod < 0 || r.lod >= n) continue;
      if (block_elements(r.lod) > capacity_) {
        throw Error(ErrorKind::kCapacity, "a level " + std::to_string(r.lod) + " brick needs " +
                                              std::to_string(block_elements(r.lod)) +
                                              " base elements, pool holds " + std::to_string(capacity_));
      }
      if (residency_[r.brick] && residency_[r.brick]->lod == r.lod) continue;
      todo.push_back(r);
    }
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end(),
                           [](const BrickRequest& a, const BrickRequest& b) { return a.brick == b.brick; }),
               todo.end());

    // Eviction: unused this frame, used at an uncached level, or about to be
    // replaced by a request at another level.
    std::size_t ti = 0;
    for (std::uint64_t b = 0; b < brick_count_; ++b) {
      while (ti < todo.size() && todo[ti].brick < b) ++ti;
      if (!residency_[b]) continue;
      const auto u = usage_[b].load(std::memory_order_relaxed);
      const bool replaced = ti < todo.size() && todo[ti].brick == b;
      if (u == kInvisible || int(u) >= n || replaced) evict(b);
    }

    std::vector<Placement> placed;
    placed.reserve(todo.size());
    for (const auto& r : todo) {
      const auto start = allocate(r.lod);
      if (!start) {
        placed = rebuild(todo);
        break;
      }
      residency_[r.brick] = Residency{*start, r.lod};
      placed.push_back({r.brick, r.lod, *start});
    }

    if (storage_.size() < top_ * kBaseElementLabels) storage_.resize(top_ * kBaseElementLabels);
    stats_.placements += placed.size();
    const auto t_decode = Clock::now();
    parallel_for(placed.size(), workers, [&](std::size_t i) {
      const auto& p = placed[i];
      std::span<Label> out(storage_.data() + p.start * kBaseElementLabels, block_elements(p.lod) * kBaseElementLabels);
      decode(p.brick, p.lod, out);
    });
    for (const auto& p : placed) stats_.decoded_labels += block_elements(p.lod) * kBaseElementLabels;
    const auto t_end = Clock::now();
    timing_.structure_ms = std::chrono::duration<double, std::milli>(t_decode - t_start).count();
    timing_.decode_ms = std::chrono::duration<double, std::milli>(t_end - t_decode).count();
    return placed;
  }

  const AssignTiming& last_assign_timing() const { return timing_; }

  CacheStats stats() const {
    CacheStats s = stats_;
    s.capacity_elements = capacity_;
    s.top = top_;
    s.active_elements = active_;
    s.resident_bricks = resident_count_;
    return s;
  }

 private:
  void evict(std::uint64_t b) {
    const Residency r = *residency_[b];
    stacks_[static_cast<std::size_t>(r.lod)].push_back(r.start);
    residency_[b].reset();
    active_ -= block_elements(r.lod);
    --resident_count_;
    ++stats_.evictions;
  }

  std::optional<std::uint64_t> allocate(int lod) {
    auto& stack = stacks_[static_cast<std::size_t>(lod)];
    const std::uint64_t size = block_elements(lod);
    std::uint64_t start;
    if (!stack.empty()) {
      start = stack.back();
      stack.pop_back();
    } else if (capacity_ - top_ >= size) {
      start = top_;
      top_ += size;
    } else {
      return std::nullopt;
    }
    active_ += size;
    ++resident_count_;
    return start;
  }

  // Clears the pool and re-places every brick used this frame, at its
  // requested level if it has one pending and at its resident level
  // otherwise. Pending requests are thereby served in the same frame.
  std::vector<Placement> rebuild(const std::vector<BrickRequest>& todo) {
    ++stats_.rebuilds;
    std::vector<BrickRequest> keep;
    std::size_t ti = 0;
    for (std::uint64_t b = 0; b < brick_count_; ++b) {
      while (ti < todo.size() && todo[ti].brick < b) ++ti;
      if (ti < todo.size() && todo[ti].brick == b) {
        keep.push_back(todo[ti]);
      } else if (residency_[b] && usage_[b].load(std::memory_order_relaxed) != kInvisible) {
        keep.push_back({b, residency_[b]->lod});
      }
    }
    for (auto& s : stacks_) s.clear();
    std::fill(residency_.begin(), residency_.end(), std::nullopt);
    top_ = 0;
    active_ = 0;
    resident_count_ = 0;
    std::vector<Placement> placed;
    placed.reserve(keep.size());
    for (const auto& r : keep) {
      const auto start = allocate(r.lod);
      if (!start) {
        throw Error(ErrorKind::kCapacity, "visible bricks need more than the pool's " +
                                              std::to_string(capacity_) + " base elements");
      }
      residency_[r.brick] = Residency{*start, r.lod};
      placed.push_back({r.brick, r.lod, *start});
    }
    return placed;
  }

  BrickConfig config_;
  std::uint64_t capacity_;
  std::vector<std::optional<Residency>> residency_;
  std::unique_ptr<std::atomic<std::uint8_t>[]> usage_;
  std::uint64_t brick_count_;
  std::vector<std::vector<std::uint64_t>> stacks_;
  std::uint64_t top_ = 0;
  std::uint64_t active_ = 0;
  std::uint64_t resident_count_ = 0;
  std::vector<Label> storage_;
  CacheStats stats_;
  AssignTiming timing_;
};

}  // namespace csvol

#endif  // CSVOL_BRICK_CACHE_HPP
