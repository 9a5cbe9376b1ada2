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

// Whole-volume compression into the `.csv1` container.
//
// File layout (all integers little-endian), see docs/format.md:
//
//   header     136 bytes
//   directory  44 bytes per brick, bricks in x-fastest brick-grid order
//   palettes   32-bit labels
//   coarse     per-brick streams for levels N-1..1
//   detail     per-brick streams for level 0, last so it can stay on disk

#ifndef CSVOL_CONTAINER_HPP
#define CSVOL_CONTAINER_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csvol/brick_codec.hpp"
#include "csvol/core_indexing.hpp"
#include "csvol/entropy_rans.hpp"
#include "csvol/error.hpp"
#include "csvol/parallel.hpp"
#include "csvol/pyramid.hpp"
#include "csvol/volume.hpp"

namespace csvol {

inline constexpr std::array<char, 4> kContainerMagic = {'C', 'S', 'V', '1'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderBytes = 136;
inline constexpr std::size_t kDirectoryEntryBytes = 44;
inline constexpr std::uint32_t kDefaultPrepassStride = 512;

enum class PaddingMode : std::uint8_t { kEdgeReplicate = 0 };

struct VolumeMeta {
  Dims dims;
  int label_width = 32;
  BrickConfig config;
  Dims brick_grid;
  PaddingMode padding = PaddingMode::kEdgeReplicate;

  std::uint64_t brick_count() const { return brick_grid.count(); }
  Dims padded_dims() const {
    const std::uint32_t b = static_cast<std::uint32_t>(config.side());
    return {brick_grid.x * b, brick_grid.y * b, brick_grid.z * b};
  }
  std::uint64_t original_bytes() const { return dims.count() * (label_width / 8); }
  std::array<std::uint32_t, 3> brick_coord(std::uint64_t brick) const {
    return {static_cast<std::uint32_t>(brick % brick_grid.x),
            static_cast<std::uint32_t>((brick / brick_grid.x) % brick_grid.y),
            static_cast<std::uint32_t>(brick / (std::uint64_t(brick_grid.x) * brick_grid.y))};
  }
  std::uint64_t brick_index(std::uint32_t bx, std::uint32_t by, std::uint32_t bz) const {
    return (std::uint64_t(bz) * brick_grid.y + by) * brick_grid.x + bx;
  }

  static VolumeMeta make(Dims dims, int label_width, BrickConfig config) {
    if (dims.count() == 0) throw Error(ErrorKind::kInputShape, "volume dims must be >= 1");
    config.validate();
    const std::uint32_t b = static_cast<std::uint32_t>(config.side());
    VolumeMeta m;
    m.dims = dims;
    m.label_width = label_width;
    m.config = config;
    m.brick_grid = {(dims.x + b - 1) / b, (dims.y + b - 1) / b, (dims.z + b - 1) / b};
    return m;
  }
};

struct BrickRecord {
  std::uint64_t palette_offset = 0;  // in labels
  std::uint32_t palette_length = 0;
  std::uint64_t coarse_offset = 0;
  std::uint32_t coarse_bytes = 0;
  std::uint32_t coarse_nibbles = 0;
  std::uint64_t detail_offset = 0;
  std::uint32_t detail_bytes = 0;
  std::uint32_t detail_nibbles = 0;

  bool is_constant() const { return coarse_nibbles == 0 && detail_nibbles == 0; }
  friend bool operator==(const BrickRecord&, const BrickRecord&) = default;
};

// Raw (non entropy coded) streams store two nibbles per byte, low nibble first.
inline std::vector<std::uint8_t> pack_nibbles(std::span<const std::uint8_t> nibbles) {
  std::vector<std::uint8_t> out((nibbles.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < nibbles.size(); ++i) {
    out[i / 2] |= static_cast<std::uint8_t>((nibbles[i] & 0xF) << (4 * (i & 1)));
  }
  return out;
}

class PackedNibbleSource {
 public:
  PackedNibbleSource(std::span<const std::uint8_t> bytes, std::uint64_t count, const char* name)
      : bytes_(bytes), count_(count), name_(name) {
    if (bytes.size() != (count + 1) / 2) {
      throw Error(ErrorKind::kCorruptStream, std::string(name) + " stream holds " +
                                                 std::to_string(bytes.size()) + " bytes for " +
                                                 std::to_string(count) + " nibbles");
    }
  }

  std::uint8_t next() {
    if (pos_ >= count_) {
      throw Error(ErrorKind::kCorruptStream,
                  std::string(name_) + " stream underrun at nibble " + std::to_string(pos_));
    }
    const std::uint8_t v = (bytes_[pos_ / 2] >> (4 * (pos_ & 1))) & 0xF;
    ++pos_;
    return v;
  }
  std::uint64_t consumed() const { return pos_; }
  const char* name() const { return name_; }
  void finish() const {
    if (pos_ != count_) {
      throw Error(ErrorKind::kCorruptStream, std::string(name_) + " stream has " +
                                                 std::to_string(count_ - pos_) +
                                                 " trailing nibbles");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t count_;
  const char* name_;
  std::uint64_t pos_ = 0;
};

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  template <class T>
  void put(T v) {
    for (std::size_t k = 0; k < sizeof(T); ++k) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * k)));
    }
  }
  void put_bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= std::uint64_t(in_[pos_ + k]) << (8 * k);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw Error(ErrorKind::kCorruptStream, "container truncated at byte " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Counters shared by every decode path, read by stats reporting.
struct DecodeCounters {
  std::atomic<std::uint64_t> bricks{0};
  std::atomic<std::uint64_t> labels{0};
  std::atomic<std::uint64_t> coarse_bytes{0};
  std::atomic<std::uint64_t> detail_bytes{0};

  std::uint64_t decoded_bytes() const { return labels.load() * sizeof(Label); }
};

class Container {
 public:
  Container() = default;

  const VolumeMeta& meta() const { return meta_; }
  const BrickConfig& config() const { return meta_.config; }
  bool entropy_coded() const { return entropy_; }
  std::uint32_t prepass_stride() const { return prepass_stride_; }
  const TablePair& tables() const { return tables_; }
  std::uint64_t brick_count() const { return directory_.size(); }
  const std::vector<BrickRecord>& directory() const { return directory_; }
  const BrickRecord& record(std::uint64_t brick) const { return directory_.at(brick); }

  std::span<const Label> palette(std::uint64_t brick) const {
    const auto& r = directory_.at(brick);
    return std::span<const Label>(palettes_).subspan(r.palette_offset, r.palette_length);
  }
  std::span<const std::uint8_t> coarse_stream(std::uint64_t brick) const {
    const auto& r = directory_.at(brick);
    return std::span<const std::uint8_t>(coarse_).subspan(r.coarse_offset, r.coarse_bytes);
  }
  /// Only valid when the detail section is resident.
  std::span<const std::uint8_t> detail_stream(std::uint64_t brick) const {
    if (!detail_resident_) {
      throw Error(ErrorKind::kConfiguration, "detail section not loaded");
    }
    const auto& r = directory_.at(brick);
    return std::span<const std::uint8_t>(detail_).subspan(r.detail_offset, r.detail_bytes);
  }
  bool detail_resident() const { return detail_resident_; }

  std::uint64_t palette_blob_labels() const { return palettes_.size(); }
  std::uint64_t coarse_blob_bytes() const { return coarse_blob_size_; }
  std::uint64_t detail_blob_bytes() const { return detail_blob_size_; }

  std::uint64_t detail_section_offset() const {
    return kHeaderBytes + directory_.size() * kDirectoryEntryBytes + palettes_.size() * 4 +
           coarse_blob_size_;
  }
  std::uint64_t serialized_size() const { return detail_section_offset() + detail_blob_size_; }

  /// Compressed size over original size.
  double compression_rate() const {
    return static_cast<double>(serialized_size()) / static_cast<double>(meta_.original_bytes());
  }

  std::vector<std::uint8_t> serialize() const {
    if (!detail_resident_) {
      throw Error(ErrorKind::kConfiguration, "cannot serialize without the detail section");
    }
    std::vector<std::uint8_t> out;
    out.reserve(serialized_size());
    detail::ByteWriter w(out);
    for (char c : kContainerMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.put<std::uint16_t>(kContainerVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(meta_.config.brick_log2));
    w.put<std::uint8_t>(static_cast<std::uint8_t>((entropy_ ? 1 : 0) | (meta_.label_width == 16 ? 2 : 0)));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(meta_.padding));
    for (int k = 0; k < 3; ++k) w.put<std::uint8_t>(0);
    w.put<std::uint32_t>(meta_.dims.x);
    w.put<std::uint32_t>(meta_.dims.y);
    w.put<std::uint32_t>(meta_.dims.z);
    w.put<std::uint32_t>(meta_.brick_grid.x);
    w.put<std::uint32_t>(meta_.brick_grid.y);
    w.put<std::uint32_t>(meta_.brick_grid.z);
    w.put<std::uint32_t>(prepass_stride_);
    for (auto c : tables_.interior.counts()) w.put<std::uint16_t>(c);
    for (auto c : tables_.leaf.counts()) w.put<std::uint16_t>(c);
    w.put<std::uint64_t>(directory_.size());
    w.put<std::uint64_t>(palettes_.size());
    w.put<std::uint64_t>(coarse_blob_size_);
    w.put<std::uint64_t>(detail_blob_size_);
    for (const auto& r : directory_) {
      w.put<std::uint64_t>(r.palette_offset);
      w.put<std::uint32_t>(r.palette_length);
      w.put<std::uint64_t>(r.coarse_offset);
      w.put<std::uint32_t>(r.coarse_bytes);
      w.put<std::uint32_t>(r.coarse_nibbles);
      w.put<std::uint64_t>(r.detail_offset);
      w.put<std::uint32_t>(r.detail_bytes);
      w.put<std::uint32_t>(r.detail_nibbles);
    }
    for (Label l : palettes_) w.put<std::uint32_t>(l);
    w.put_bytes(coarse_);
    w.put_bytes(detail_);
    return out;
  }

  /// Parses a container. With `with_detail` false the input may end at the
  /// detail section and detail streams must come from elsewhere.
  static Container parse(std::span<const std::uint8_t> bytes, bool with_detail = true) {
    detail::ByteReader r(bytes);
    Container c;
    for (char m : kContainerMagic) {
      if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(m)) {
        throw Error(ErrorKind::kCorruptStream, "bad container magic");
      }
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kContainerVersion) {
      throw Error(ErrorKind::kCorruptStream, "unsupported container version " + std::to_string(version));
    }
    const int log2 = r.get<std::uint8_t>();
    const auto flags = r.get<std::uint8_t>();
    const auto padding = r.get<std::uint8_t>();
    r.take(3);
    if (log2 < BrickConfig::kMinLog2 || log2 > BrickConfig::kMaxLog2 || padding != 0 || flags > 3) {
      throw Error(ErrorKind::kCorruptStream, "invalid container header fields");
    }
    c.entropy_ = (flags & 1) != 0;
    Dims dims{r.get<std::uint32_t>(), r.get<std::uint32_t>(), r.get<std::uint32_t>()};
    if (dims.count() == 0) throw Error(ErrorKind::kCorruptStream, "container has zero dims");
    c.meta_ = VolumeMeta::make(dims, (flags & 2) ? 16 : 32, BrickConfig(log2));
    Dims grid{r.get<std::uint32_t>(), r.get<std::uint32_t>(), r.get<std::uint32_t>()};
    if (!(grid == c.meta_.brick_grid)) {
      throw Error(ErrorKind::kCorruptStream, "brick grid does not match dims");
    }
    c.prepass_stride_ = r.get<std::uint32_t>();
    std::array<std::uint16_t, kSymbolCount> ti{}, tl{};
    for (auto& v : ti) v = r.get<std::uint16_t>();
    for (auto& v : tl) v = r.get<std::uint16_t>();
    try {
      c.tables_ = {FrequencyTable(ti), FrequencyTable(tl)};
    } catch (const Error&) {
      throw Error(ErrorKind::kCorruptStream, "container frequency tables are invalid");
    }
    const auto count = r.get<std::uint64_t>();
    const auto palette_labels = r.get<std::uint64_t>();
    c.coarse_blob_size_ = r.get<std::uint64_t>();
    c.detail_blob_size_ = r.get<std::uint64_t>();
    if (count != c.meta_.brick_count()) {
      throw Error(ErrorKind::kCorruptStream, "directory size does not match brick grid");
    }
    if (count > bytes.size() / kDirectoryEntryBytes) {
      throw Error(ErrorKind::kCorruptStream, "container truncated in directory");
    }
    c.directory_.resize(count);
    for (auto& e : c.directory_) {
      e.palette_offset = r.get<std::uint64_t>();
      e.palette_length = r.get<std::uint32_t>();
      e.coarse_offset = r.get<std::uint64_t>();
      e.coarse_bytes = r.get<std::uint32_t>();
      e.coarse_nibbles = r.get<std::uint32_t>();
      e.detail_offset = r.get<std::uint64_t>();
      e.detail_bytes = r.get<std::uint32_t>();
      e.detail_nibbles = r.get<std::uint32_t>();
    }
    if (palette_labels > bytes.size() / 4) {
      throw Error(ErrorKind::kCorruptStream, "container truncated in palettes");
    }
    auto pal = r.take(palette_labels * 4);
    c.palettes_.resize(palette_labels);
    for (std::size_t i = 0; i < palette_labels; ++i) {
      c.palettes_[i] = Label(pal[4 * i]) | (Label(pal[4 * i + 1]) << 8) |
                       (Label(pal[4 * i + 2]) << 16) | (Label(pal[4 * i + 3]) << 24);
    }
    auto coarse = r.take(c.coarse_blob_size_);
    c.coarse_.assign(coarse.begin(), coarse.end());
    c.detail_resident_ = with_detail;
    if (with_detail) {
      auto det = r.take(c.detail_blob_size_);
      c.detail_.assign(det.begin(), det.end());
      if (r.pos() != bytes.size()) {
        throw Error(ErrorKind::kCorruptStream, "trailing bytes after detail section");
      }
    }
    c.validate_directory();
    return c;
  }

  /// Every blob byte is covered by exactly one directory entry and every
  /// entry is internally consistent.
  void validate_directory() const {
    auto check_cover = [&](const char* what, std::uint64_t blob, auto offset, auto length) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
      spans.reserve(directory_.size());
      for (const auto& e : directory_) spans.emplace_back(offset(e), length(e));
      std::sort(spans.begin(), spans.end());
      std::uint64_t end = 0;
      for (const auto& [off, len] : spans) {
        if (len == 0) continue;
        if (off != end) {
          throw Error(ErrorKind::kCorruptStream,
                      std::string(what) + " blob has a gap or overlap at " + std::to_string(off));
        }
        end = off + len;
      }
      if (end != blob) {
        throw Error(ErrorKind::kCorruptStream,
                    std::string(what) + " blob size does not match directory");
      }
    };
    for (const auto& e : directory_) {
      if (e.palette_length == 0) throw Error(ErrorKind::kCorruptStream, "brick with empty palette");
      if (!entropy_) {
        if (e.coarse_bytes != (e.coarse_nibbles + 1ULL) / 2 ||
            e.detail_bytes != (e.detail_nibbles + 1ULL) / 2) {
          throw Error(ErrorKind::kCorruptStream, "raw stream size does not match nibble count");
        }
      } else if ((e.coarse_nibbles == 0) != (e.coarse_bytes == 0) ||
                 (e.detail_nibbles == 0) != (e.detail_bytes == 0) ||
                 (e.coarse_bytes != 0 && e.coarse_bytes < 4) ||
                 (e.detail_bytes != 0 && e.detail_bytes < 4)) {
        throw Error(ErrorKind::kCorruptStream, "entropy stream size does not match nibble count");
      }
    }
    check_cover("palette", palettes_.size(), [](const BrickRecord& e) { return e.palette_offset; },
                [](const BrickRecord& e) { return std::uint64_t(e.palette_length); });
    check_cover("coarse", coarse_blob_size_, [](const BrickRecord& e) { return e.coarse_offset; },
                [](const BrickRecord& e) { return std::uint64_t(e.coarse_bytes); });
    check_cover("detail", detail_blob_size_, [](const BrickRecord& e) { return e.detail_offset; },
                [](const BrickRecord& e) { return std::uint64_t(e.detail_bytes); });
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + path);
  }

  /// Loads a container file; with `with_detail` false only the hot sections
  /// (header, directory, palettes, coarse streams) are read.
  static Container load(const std::string& path, bool with_detail = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes;
    if (with_detail) {
      bytes.resize(size);
      in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    } else {
      // Read the header first to learn where the detail section starts.
      bytes.resize(std::min<std::uint64_t>(size, kHeaderBytes));
      in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (bytes.size() < kHeaderBytes) throw Error(ErrorKind::kCorruptStream, "container truncated");
      detail::ByteReader r(std::span<const std::uint8_t>(bytes).subspan(104));
      const auto count = r.get<std::uint64_t>();
      const auto labels = r.get<std::uint64_t>();
      const auto coarse = r.get<std::uint64_t>();
      const std::uint64_t hot = kHeaderBytes + count * kDirectoryEntryBytes + labels * 4 + coarse;
      if (hot > size) throw Error(ErrorKind::kCorruptStream, "container truncated");
      bytes.resize(hot);
      in.read(reinterpret_cast<char*>(bytes.data() + kHeaderBytes),
              static_cast<std::streamsize>(hot - kHeaderBytes));
    }
    if (!in) throw Error(ErrorKind::kIo, "short read from " + path);
    return parse(bytes, with_detail);
  }

 private:
  friend class ContainerBuilder;

  VolumeMeta meta_;
  bool entropy_ = true;
  std::uint32_t prepass_stride_ = kDefaultPrepassStride;
  TablePair tables_;
  std::vector<BrickRecord> directory_;
  std::vector<Label> palettes_;
  std::vector<std::uint8_t> coarse_;
  std::vector<std::uint8_t> detail_;
  std::uint64_t coarse_blob_size_ = 0;
  std::uint64_t detail_blob_size_ = 0;
  bool detail_resident_ = true;
};

/// Appends encoded bricks in directory order.
class ContainerBuilder {
 public:
  ContainerBuilder(const VolumeMeta& meta, bool entropy, std::uint32_t stride, const TablePair& tables) {
    c_.meta_ = meta;
    c_.entropy_ = entropy;
    c_.prepass_stride_ = stride;
    c_.tables_ = tables;
    c_.directory_.reserve(meta.brick_count());
  }

  /// Streams must already be entropy coded or packed.
  void append(std::span<const Label> palette, std::span<const std::uint8_t> coarse,
              std::uint32_t coarse_nibbles, std::span<const std::uint8_t> detail,
              std::uint32_t detail_nibbles) {
    BrickRecord r;
    r.palette_offset = c_.palettes_.size();
    r.palette_length = static_cast<std::uint32_t>(palette.size());
    r.coarse_offset = c_.coarse_.size();
    r.coarse_bytes = static_cast<std::uint32_t>(coarse.size());
    r.coarse_nibbles = coarse_nibbles;
    r.detail_offset = c_.detail_.size();
    r.detail_bytes = static_cast<std::uint32_t>(detail.size());
    r.detail_nibbles = detail_nibbles;
    c_.palettes_.insert(c_.palettes_.end(), palette.begin(), palette.end());
    c_.coarse_.insert(c_.coarse_.end(), coarse.begin(), coarse.end());
    c_.detail_.insert(c_.detail_.end(), detail.begin(), detail.end());
    c_.directory_.push_back(r);
  }

  Container finish() {
    if (c_.directory_.size() != c_.meta_.brick_count()) {
      throw Error(ErrorKind::kConfiguration, "container is missing bricks");
    }
    c_.coarse_blob_size_ = c_.coarse_.size();
    c_.detail_blob_size_ = c_.detail_.size();
    return std::move(c_);
  }

 private:
  Container c_;
};

struct CompressOptions {
  BrickConfig config{5};
  unsigned workers = 1;
  std::uint32_t prepass_stride = kDefaultPrepassStride;
  bool entropy = true;
};

/// Copies one brick out of a slab of `slab_depth` z-slices starting at the
/// brick's first slice, replicating edge voxels past the volume border.
/// Output is level 0 in Morton order.
inline void extract_brick(std::span<const Label> slab, Dims dims, std::uint32_t slab_depth,
                          std::uint32_t bx, std::uint32_t by, const BrickConfig& config,
                          std::span<Label> out) {
  const std::uint32_t b = static_cast<std::uint32_t>(config.side());
  const std::uint32_t x0 = bx * b;
  const std::uint32_t y0 = by * b;
  for (std::uint32_t z = 0; z < b; ++z) {
    const std::uint64_t sz = std::min(z, slab_depth - 1);
    for (std::uint32_t y = 0; y < b; ++y) {
      const std::uint64_t sy = std::min(y0 + y, dims.y - 1);
      const Label* row = slab.data() + (sz * dims.y + sy) * dims.x;
      for (std::uint32_t x = 0; x < b; ++x) {
        out[morton_encode(x, y, z)] = row[std::min(x0 + x, dims.x - 1)];
      }
    }
  }
}

namespace detail {

struct EncodedBrick {
  BrickEncoding enc;
  std::vector<std::uint8_t> coarse_bytes;
  std::vector<std::uint8_t> detail_bytes;
};

inline BrickEncoding encode_from_slab(std::span<const Label> slab, Dims dims, std::uint32_t depth,
                                      std::uint32_t bx, std::uint32_t by, const BrickConfig& config) {
  std::vector<Label> brick(config.voxels());
  extract_brick(slab, dims, depth, bx, by, config, brick);
  return encode_brick(build_pyramid(brick, config));
}

class SlabReader {
 public:
  SlabReader(const VolumeSource& src, const BrickConfig& config)
      : src_(src), dims_(src.dims()), b_(static_cast<std::uint32_t>(config.side())) {}

  std::span<const Label> load(std::uint32_t bz) {
    if (loaded_ != bz) {
      const std::uint32_t z0 = bz * b_;
      depth_ = std::min(b_, dims_.z - z0);
      buf_.resize(std::uint64_t(dims_.x) * dims_.y * depth_);
      src_.read_slices(z0, depth_, buf_);
      loaded_ = bz;
    }
    return buf_;
  }
  std::uint32_t depth() const { return depth_; }

 private:
  const VolumeSource& src_;
  Dims dims_;
  std::uint32_t b_;
  std::vector<Label> buf_;
  std::uint32_t depth_ = 0;
  std::int64_t loaded_ = -1;
};

}  // namespace detail

/// Samples every `stride`-th brick (directory order) and builds both tables.
inline TablePair prepass_tables(const VolumeSource& src, const VolumeMeta& meta,
                                std::uint32_t stride, unsigned workers) {
  if (stride == 0) throw Error(ErrorKind::kConfiguration, "prepass stride must be >= 1");
  std::vector<std::uint64_t> sampled;
  for (std::uint64_t i = 0; i < meta.brick_count(); i += stride) sampled.push_back(i);
  std::vector<std::vector<std::uint8_t>> interior(sampled.size());
  std::vector<std::vector<std::uint8_t>> leaf(sampled.size());
  detail::SlabReader reader(src, meta.config);
  std::size_t i = 0;
  while (i < sampled.size()) {
    const std::uint32_t bz = meta.brick_coord(sampled[i])[2];
    std::size_t j = i;
    while (j < sampled.size() && meta.brick_coord(sampled[j])[2] == bz) ++j;
    const auto slab = reader.load(bz);
    const std::uint32_t depth = reader.depth();
    parallel_for(j - i, workers, [&](std::size_t k) {
      const auto c = meta.brick_coord(sampled[i + k]);
      auto enc = detail::encode_from_slab(slab, meta.dims, depth, c[0], c[1], meta.config);
      interior[i + k] = std::move(enc.coarse);
      leaf[i + k] = std::move(enc.detail);
    });
    i = j;
  }
  return build_frequency_tables(interior, leaf);
}

/// Compresses a volume slab by slab. Output bytes do not depend on the
/// worker count.
inline Container compress_volume(const VolumeSource& src, const CompressOptions& opts) {
  const VolumeMeta meta = VolumeMeta::make(src.dims(), src.label_width(), opts.config);
  const unsigned workers = std::max(1U, opts.workers);
  TablePair tables;
  if (opts.entropy) tables = prepass_tables(src, meta, opts.prepass_stride, workers);
  ContainerBuilder builder(meta, opts.entropy, opts.prepass_stride, tables);

  detail::SlabReader reader(src, meta.config);
  const std::uint64_t per_slab = std::uint64_t(meta.brick_grid.x) * meta.brick_grid.y;
  std::vector<detail::EncodedBrick> results(per_slab);
  for (std::uint32_t bz = 0; bz < meta.brick_grid.z; ++bz) {
    const auto slab = reader.load(bz);
    const std::uint32_t depth = reader.depth();
    parallel_for(per_slab, workers, [&](std::size_t k) {
      auto& r = results[k];
      const auto bx = static_cast<std::uint32_t>(k % meta.brick_grid.x);
      const auto by = static_cast<std::uint32_t>(k / meta.brick_grid.x);
      r.enc = detail::encode_from_slab(slab, meta.dims, depth, bx, by, meta.config);
      if (opts.entropy) {
        r.coarse_bytes = r.enc.coarse.empty() ? std::vector<std::uint8_t>{}
                                              : rans_encode(r.enc.coarse, tables.interior);
        r.detail_bytes = r.enc.detail.empty() ? std::vector<std::uint8_t>{}
                                              : rans_encode(r.enc.detail, tables.leaf);
      } else {
        r.coarse_bytes = pack_nibbles(r.enc.coarse);
        r.detail_bytes = pack_nibbles(r.enc.detail);
      }
    });
    for (const auto& r : results) {
      builder.append(r.enc.palette, r.coarse_bytes, static_cast<std::uint32_t>(r.enc.coarse.size()),
                     r.detail_bytes, static_cast<std::uint32_t>(r.enc.detail.size()));
    }
  }
  return builder.finish();
}

inline Container compress_volume(const Volume& volume, const CompressOptions& opts) {
  return compress_volume(InMemorySource(volume), opts);
}

/// Decodes one brick of a container to level `target`. `detail_bytes` is the
/// brick's level-0 stream and is only read when target == 0.
inline void decode_container_brick(const Container& c, std::uint64_t brick, int target,
                                   std::span<const std::uint8_t> detail_bytes, std::span<Label> out,
                                   DecodeCounters* counters = nullptr) {
  const BrickRecord& r = c.record(brick);
  const auto palette = c.palette(brick);
  const auto coarse_bytes = c.coarse_stream(brick);
  const BrickConfig& config = c.config();
  const bool full_coarse = target <= 1;
  const bool use_detail = target == 0 && !r.is_constant();
  if (use_detail && detail_bytes.size() != r.detail_bytes) {
    throw Error(ErrorKind::kCorruptStream, "detail stream of brick " + std::to_string(brick) +
                                               " has " + std::to_string(detail_bytes.size()) +
                                               " bytes, directory says " +
                                               std::to_string(r.detail_bytes));
  }
  if (c.entropy_coded()) {
    RansNibbleSource coarse(coarse_bytes, c.tables().interior, r.coarse_nibbles, "coarse");
    RansNibbleSource det(use_detail ? detail_bytes : std::span<const std::uint8_t>{},
                         c.tables().leaf, use_detail ? r.detail_nibbles : 0, "detail");
    decode_brick_into(palette, r.is_constant(), coarse, det, target, config, out);
    if (!r.is_constant() && target < config.max_level()) {
      if (full_coarse) coarse.finish();
      if (use_detail) det.finish();
    }
  } else {
    PackedNibbleSource coarse(coarse_bytes, r.coarse_nibbles, "coarse");
    PackedNibbleSource det(use_detail ? detail_bytes : std::span<const std::uint8_t>{},
                           use_detail ? r.detail_nibbles : 0, "detail");
    decode_brick_into(palette, r.is_constant(), coarse, det, target, config, out);
    if (!r.is_constant() && target < config.max_level()) {
      if (full_coarse) coarse.finish();
      if (use_detail) det.finish();
    }
  }
  if (counters != nullptr) {
    counters->bricks.fetch_add(1, std::memory_order_relaxed);
    counters->labels.fetch_add(out.size(), std::memory_order_relaxed);
    if (target < config.max_level() && !r.is_constant()) {
      counters->coarse_bytes.fetch_add(coarse_bytes.size(), std::memory_order_relaxed);
      if (use_detail) counters->detail_bytes.fetch_add(detail_bytes.size(), std::memory_order_relaxed);
    }
  }
}

inline std::vector<Label> decode_container_brick(const Container& c, std::uint64_t brick, int target) {
  std::vector<Label> out(c.config().level_nodes(target));
  decode_container_brick(c, brick, target,
                         target == 0 ? c.detail_stream(brick) : std::span<const std::uint8_t>{}, out);
  return out;
}

/// Reassembles the volume at level `target`, cropped to ceil(dims / 2^target).
inline Volume decompress_volume(const Container& c, int target, unsigned workers = 1,
                                DecodeCounters* counters = nullptr) {
  const VolumeMeta& meta = c.meta();
  if (target < 0 || target > meta.config.max_level()) {
    throw Error(ErrorKind::kConfiguration, "target level " + std::to_string(target) +
                                               " outside [0, " +
                                               std::to_string(meta.config.max_level()) + "]");
  }
  Volume v(shrink_dims(meta.dims, target));
  v.label_width = meta.label_width;
  const std::uint32_t side = static_cast<std::uint32_t>(meta.config.level_side(target));
  parallel_for(c.brick_count(), std::max(1U, workers), [&](std::size_t brick) {
    std::vector<Label> out(meta.config.level_nodes(target));
    decode_container_brick(c, brick, target,
                           target == 0 ? c.detail_stream(brick) : std::span<const std::uint8_t>{},
                           out, counters);
    const auto bc = meta.brick_coord(brick);
    const std::uint32_t x0 = bc[0] * side, y0 = bc[1] * side, z0 = bc[2] * side;
    for (std::uint32_t z = 0; z < side && z0 + z < v.dims.z; ++z) {
      for (std::uint32_t y = 0; y < side && y0 + y < v.dims.y; ++y) {
        for (std::uint32_t x = 0; x < side && x0 + x < v.dims.x; ++x) {
          v.at(x0 + x, y0 + y, z0 + z) = out[morton_encode(x, y, z)];
        }
      }
    }
  });
  return v;
}

/// Per-8^3-block paletting size: 4 bytes per distinct label plus
/// max(1, ceil(log2(k))) bits for each of the block's voxels.
inline std::uint64_t palette_baseline_size(const Volume& v, std::uint32_t block = 8) {
  const Dims g{(v.dims.x + block - 1) / block, (v.dims.y + block - 1) / block,
               (v.dims.z + block - 1) / block};
  const std::uint64_t voxels = std::uint64_t(block) * block * block;
  std::uint64_t total = 0;
  std::vector<Label> labels(voxels);
  for (std::uint32_t bz = 0; bz < g.z; ++bz) {
    for (std::uint32_t by = 0; by < g.y; ++by) {
      for (std::uint32_t bx = 0; bx < g.x; ++bx) {
        std::size_t n = 0;
        for (std::uint32_t z = 0; z < block; ++z) {
          for (std::uint32_t y = 0; y < block; ++y) {
            for (std::uint32_t x = 0; x < block; ++x) {
              labels[n++] = v.at(std::min(bx * block + x, v.dims.x - 1),
                                 std::min(by * block + y, v.dims.y - 1),
                                 std::min(bz * block + z, v.dims.z - 1));
            }
          }
        }
        std::sort(labels.begin(), labels.end());
        const std::uint64_t k =
            static_cast<std::uint64_t>(std::unique(labels.begin(), labels.end()) - labels.begin());
        std::uint64_t bits = 1;
        while ((std::uint64_t{1} << bits) < k) ++bits;
        total += 4 * k + (bits * voxels + 7) / 8;
      }
    }
  }
  return total;
}

}  // namespace csvol

#endif  // CSVOL_CONTAINER_HPP
