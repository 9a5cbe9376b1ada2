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

// Per-frame pipeline: render, fetch detail streams within a byte budget,
// assign cache blocks and decode. Also camera-path scripts and the per-frame
// timing log used by the offline renderer.

#ifndef CSVOL_FRAME_LOOP_HPP
#define CSVOL_FRAME_LOOP_HPP

#include <chrono>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csvol/brick_cache.hpp"
#include "csvol/container.hpp"
#include "csvol/error.hpp"
#include "csvol/renderer.hpp"

namespace csvol {

inline constexpr std::uint64_t kDefaultDetailBudget = 8ULL << 20;

/// Cold storage for level-0 streams.
class DetailStore {
 public:
  virtual ~DetailStore() = default;
  /// Copies bytes [offset, offset + out.size()) of a brick's detail stream.
  virtual void read(std::uint64_t brick, std::uint64_t offset, std::span<std::uint8_t> out) = 0;
};

/// Detail streams held by a fully loaded container.
class InMemoryDetailStore final : public DetailStore {
 public:
  explicit InMemoryDetailStore(std::shared_ptr<const Container> c) : c_(std::move(c)) {}
  void read(std::uint64_t brick, std::uint64_t offset, std::span<std::uint8_t> out) override {
    const auto s = c_->detail_stream(brick);
    std::copy_n(s.begin() + static_cast<std::ptrdiff_t>(offset), out.size(), out.begin());
  }

 private:
  std::shared_ptr<const Container> c_;
};

/// Detail streams read lazily from the container file.
class FileDetailStore final : public DetailStore {
 public:
  FileDetailStore(const std::string& path, std::shared_ptr<const Container> c)
      : path_(path), c_(std::move(c)), in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorKind::kIo, "cannot open " + path);
  }

  void read(std::uint64_t brick, std::uint64_t offset, std::span<std::uint8_t> out) override {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto pos = c_->detail_section_offset() + c_->record(brick).detail_offset + offset;
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(pos));
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!in_) throw Error(ErrorKind::kIo, path_ + ": short read of detail stream for brick " + std::to_string(brick));
  }

 private:
  std::string path_;
  std::shared_ptr<const Container> c_;
  std::ifstream in_;
  std::mutex mutex_;
};

struct DetailFetchResult {
  std::uint64_t fetched_bytes = 0;
  std::uint64_t pending_bytes = 0;  // still missing for the requested bricks
  std::uint64_t ready_bricks = 0;
};

/// Moves requested detail streams out of cold storage, at most `budget`
/// bytes per call. A partly transferred stream resumes on the next call.
class DetailFetcher {
 public:
  DetailFetcher(std::shared_ptr<const Container> c, std::shared_ptr<DetailStore> store, std::uint64_t budget)
      : c_(std::move(c)), store_(std::move(store)), budget_(budget) {
    if (budget_ == 0) throw Error(ErrorKind::kConfiguration, "detail budget must be positive");
  }

  std::uint64_t budget() const { return budget_; }

  /// Serves the level-0 requests in brick order. Transfers for bricks no
  /// longer requested are abandoned.
  DetailFetchResult fetch(std::span<const BrickRequest> requests) {
    DetailFetchResult res;
    std::map<std::uint64_t, Transfer> keep;
    std::uint64_t left = budget_;
    for (const auto& r : requests) {
      if (r.lod != 0) continue;
      const std::uint64_t need = c_->record(r.brick).detail_bytes;
      auto node = transfers_.extract(r.brick);
      Transfer t = node.empty() ? Transfer{} : std::move(node.mapped());
      if (t.bytes.size() != need) t.bytes.resize(need);
      const std::uint64_t n = std::min(left, need - t.have);
      if (n > 0) {
        store_->read(r.brick, t.have, std::span<std::uint8_t>(t.bytes).subspan(t.have, n));
        t.have += n;
        left -= n;
        res.fetched_bytes += n;
      }
      res.pending_bytes += need - t.have;
      res.ready_bricks += t.have == need;
      keep.emplace(r.brick, std::move(t));
    }
    transfers_ = std::move(keep);
    return res;
  }

  bool ready(std::uint64_t brick) const {
    const auto it = transfers_.find(brick);
    return it != transfers_.end() && it->second.have == it->second.bytes.size();
  }

  std::span<const std::uint8_t> bytes(std::uint64_t brick) const { return transfers_.at(brick).bytes; }

  /// Decoded detail is not needed any more.
  void drop(std::uint64_t brick) { transfers_.erase(brick); }

 private:
  struct Transfer {
    std::vector<std::uint8_t> bytes;
    std::uint64_t have = 0;
  };

  std::shared_ptr<const Container> c_;
  std::shared_ptr<DetailStore> store_;
  std::uint64_t budget_;
  std::map<std::uint64_t, Transfer> transfers_;
};

struct FrameTimings {
  double raymarch_ms = 0;
  double decompress_ms = 0;  // detail transfer plus decoding
  double assign_ms = 0;
  double total_ms = 0;
};

struct FrameReport {
  std::uint64_t frame = 0;
  FrameTimings timings;
  std::vector<BrickRequest> requests;  // as produced by the renderer
  std::uint64_t lod0_requests = 0;
  std::uint64_t downgraded = 0;  // level-0 requests placed at level 1 for lack of detail
  std::uint64_t placements = 0;
  RenderTally tally;
  DetailFetchResult detail;
  std::uint64_t decoded_bytes = 0;
  CacheStats cache;
};

struct FrameLoopOptions {
  RenderOptions render;
  std::uint64_t detail_budget = kDefaultDetailBudget;
  std::uint64_t pool_elements = kDefaultPoolElements;
  unsigned decode_workers = 1;
};

/// One cache and one detail fetcher driven frame by frame. Requests filed
/// in frame k are resident when frame k+1 renders.
class FrameLoop {
 public:
  FrameLoop(std::shared_ptr<const Container> c, std::shared_ptr<DetailStore> store, FrameLoopOptions opt)
      : c_(std::move(c)),
        opt_(opt),
        cache_(c_->config(), c_->brick_count(), opt.pool_elements),
        fetcher_(c_, std::move(store), opt.detail_budget) {}

  const Container& container() const { return *c_; }
  const BrickCache& cache() const { return cache_; }
  const DecodeCounters& counters() const { return counters_; }
  const FrameLoopOptions& options() const { return opt_; }
  RenderOptions& render_options() { return opt_.render; }
  std::uint64_t frame_index() const { return frame_; }

  std::pair<Image, FrameReport> step(const Camera& camera, const TransferFunction& tf) {
    using Clock = std::chrono::steady_clock;
    auto ms = [](Clock::time_point a, Clock::time_point b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    FrameReport rep;
    rep.frame = frame_++;
    const std::uint64_t decoded_before = counters_.decoded_bytes();
    const auto t0 = Clock::now();

    cache_.begin_frame();
    auto [image, request] = render_frame(*c_, cache_, camera, tf, opt_.render);
    const auto t1 = Clock::now();

    rep.detail = fetcher_.fetch(request.requests);
    std::vector<BrickRequest> place = request.requests;
    for (auto& r : place) {
      if (r.lod != 0) continue;
      ++rep.lod0_requests;
      if (!fetcher_.ready(r.brick)) {
        r.lod = 1;
        ++rep.downgraded;
      }
    }
    const auto t2 = Clock::now();

    const auto placed = cache_.end_frame_assign(
        place,
        [&](std::uint64_t brick, int lod, std::span<Label> out) {
          decode_container_brick(*c_, brick, lod,
                                 lod == 0 ? fetcher_.bytes(brick) : std::span<const std::uint8_t>{}, out,
                                 &counters_);
        },
        opt_.decode_workers);
    for (const auto& p : placed) {
      if (p.lod == 0) fetcher_.drop(p.brick);
    }
    const auto t3 = Clock::now();

    rep.timings.raymarch_ms = ms(t0, t1);
    rep.timings.decompress_ms = ms(t1, t2) + cache_.last_assign_timing().decode_ms;
    rep.timings.assign_ms = ms(t2, t3) - cache_.last_assign_timing().decode_ms;
    rep.timings.total_ms = ms(t0, t3);
    rep.placements = placed.size();
    rep.requests = std::move(request.requests);
    rep.tally = request.tally;
    rep.decoded_bytes = counters_.decoded_bytes() - decoded_before;
    rep.cache = cache_.stats();
    return {std::move(image), std::move(rep)};
  }

 private:
  std::shared_ptr<const Container> c_;
  FrameLoopOptions opt_;
  BrickCache cache_;
  DetailFetcher fetcher_;
  DecodeCounters counters_;
  std::uint64_t frame_ = 0;
};

/// One line of the timing log.
inline std::string frame_report_kv(const FrameReport& r) {
  std::ostringstream o;
  o << "frame=" << r.frame << " raymarch_ms=" << r.timings.raymarch_ms
    << " decompress_ms=" << r.timings.decompress_ms << " assign_ms=" << r.timings.assign_ms
    << " total_ms=" << r.timings.total_ms << " requests=" << r.requests.size()
    << " lod0_requests=" << r.lod0_requests << " downgraded=" << r.downgraded
    << " placements=" << r.placements << " samples=" << r.tally.samples
    << " coarse_samples=" << r.tally.coarse_samples << " detail_fetched_bytes=" << r.detail.fetched_bytes
    << " detail_pending_bytes=" << r.detail.pending_bytes << " decoded_bytes=" << r.decoded_bytes
    << " cache_resident=" << r.cache.resident_bricks << " cache_occupancy=" << r.cache.occupancy()
    << " cache_evictions=" << r.cache.evictions << " cache_rebuilds=" << r.cache.rebuilds;
  return o.str();
}

struct CameraKey {
  std::uint64_t frame = 0;
  Vec3 position, forward, up;
};

/// Camera path script: one key per line,
///   frame px py pz fx fy fz ux uy uz
/// with '#' comments. Frames must increase; frames between keys are
/// linearly interpolated.
inline std::vector<CameraKey> parse_camera_path(std::istream& in, const std::string& origin) {
  std::vector<CameraKey> keys;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream s(line);
    CameraKey k;
    long long frame = 0;
    if (!(s >> frame)) continue;
    if (!(s >> k.position.x >> k.position.y >> k.position.z >> k.forward.x >> k.forward.y >> k.forward.z >>
          k.up.x >> k.up.y >> k.up.z)) {
      throw Error(ErrorKind::kIngestion, origin + ":" + std::to_string(lineno) + ": expected 10 numbers");
    }
    std::string extra;
    if (s >> extra) {
      throw Error(ErrorKind::kIngestion, origin + ":" + std::to_string(lineno) + ": trailing text");
    }
    if (frame < 0 || (!keys.empty() && std::uint64_t(frame) <= keys.back().frame)) {
      throw Error(ErrorKind::kIngestion, origin + ":" + std::to_string(lineno) + ": frames must increase");
    }
    k.frame = std::uint64_t(frame);
    keys.push_back(k);
  }
  if (keys.empty()) throw Error(ErrorKind::kIngestion, origin + ": camera path has no frames");
  return keys;
}

inline std::vector<CameraKey> load_camera_path(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open camera path " + path);
  return parse_camera_path(in, path);
}

/// One camera per frame from the first to the last key.
inline std::vector<Camera> expand_camera_path(const std::vector<CameraKey>& keys, double fov_y, std::uint32_t width,
                                              std::uint32_t height) {
  std::vector<Camera> out;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& a = keys[i];
    out.emplace_back(a.position, a.forward, a.up, fov_y, width, height);
    if (i + 1 == keys.size()) break;
    const auto& b = keys[i + 1];
    for (std::uint64_t f = a.frame + 1; f < b.frame; ++f) {
      const double s = double(f - a.frame) / double(b.frame - a.frame);
      auto lerp = [&](Vec3 p, Vec3 q) { return p * (1 - s) + q * s; };
      out.emplace_back(lerp(a.position, b.position), lerp(a.forward, b.forward), lerp(a.up, b.up), fov_y, width,
                       height);
    }
  }
  return out;
}

}  // namespace csvol

#endif  // CSVOL_FRAME_LOOP_HPP
