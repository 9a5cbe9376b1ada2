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

#ifndef CSVOL_TESTS_ORACLES_CACHE_MODEL_HPP
#define CSVOL_TESTS_ORACLES_CACHE_MODEL_HPP

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csvol/brick_cache.hpp"

namespace oracle {

using csvol::Label;

inline Label fill_value(std::uint64_t brick, int lod, std::size_t i) {
  return static_cast<Label>(brick * 1000003 + lod * 7919 + i);
}

inline void fill(std::uint64_t brick, int lod, std::span<Label> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fill_value(brick, lod, i);
}

/// Straightforward model of the allocator: ordered maps, one vector per
/// free list, linear scans everywhere.
struct ReferenceAllocator {
  int levels;
  std::uint64_t capacity;
  std::map<std::uint64_t, std::pair<std::uint64_t, int>> resident;  // brick -> (start, lod)
  std::map<int, std::vector<std::uint64_t>> free;
  std::uint64_t top = 0;
  int rebuilds = 0;

  std::uint64_t size(int lod) const {
    std::uint64_t s = 1;
    for (int i = 0; i < levels - lod - 1; ++i) s *= 8;
    return s;
  }

  bool take(std::uint64_t brick, int lod) {
    auto& list = free[lod];
    if (!list.empty()) {
      resident[brick] = {list.back(), lod};
      list.pop_back();
      return true;
    }
    if (top + size(lod) > capacity) return false;
    resident[brick] = {top, lod};
    top += size(lod);
    return true;
  }

  void frame(const std::map<std::uint64_t, int>& used, std::map<std::uint64_t, int> requests) {
    for (auto it = requests.begin(); it != requests.end();) {
      auto r = resident.find(it->first);
      if (it->second >= levels || (r != resident.end() && r->second.second == it->second)) {
        it = requests.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = resident.begin(); it != resident.end();) {
      auto u = used.find(it->first);
      if (u == used.end() || u->second >= levels || requests.count(it->first)) {
        free[it->second.second].push_back(it->second.first);
        it = resident.erase(it);
      } else {
        ++it;
      }
    }
    auto before = resident;
    for (const auto& [brick, lod] : requests) {
      if (!take(brick, lod)) {
        ++rebuilds;
        std::map<std::uint64_t, int> again;
        for (const auto& [b, r] : before) again[b] = r.second;
        for (const auto& [b, l] : requests) again[b] = l;
        resident.clear();
        free.clear();
        top = 0;
        for (const auto& [b, l] : again) {
          if (!take(b, l)) throw std::runtime_error("model out of capacity");
        }
        return;
      }
    }
  }
};

/// Active blocks plus free blocks must tile [0, top) exactly. Returns an
/// empty string when they do.
inline std::string partition_error(const csvol::BrickCache& cache) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (std::uint64_t b = 0; b < cache.brick_count(); ++b) {
    if (auto r = cache.lookup(b)) spans.emplace_back(r->start, cache.block_elements(r->lod));
  }
  std::set<std::uint64_t> freed;
  for (int l = 0; l < cache.config().max_level(); ++l) {
    for (auto s : cache.free_stack(l)) {
      if (!freed.insert(s).second) return "block " + std::to_string(s) + " freed twice";
      spans.emplace_back(s, cache.block_elements(l));
    }
  }
  std::sort(spans.begin(), spans.end());
  std::uint64_t end = 0;
  for (const auto& [s, n] : spans) {
    if (s != end) return "gap or overlap at " + std::to_string(s);
    end = s + n;
  }
  if (end != cache.top()) return "blocks end at " + std::to_string(end) + ", top is " + std::to_string(cache.top());
  if (cache.top() > cache.capacity()) return "top beyond capacity";
  return {};
}

}  // namespace oracle

#endif  // CSVOL_TESTS_ORACLES_CACHE_MODEL_HPP
