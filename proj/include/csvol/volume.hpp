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

// Dense label volumes, raw file ingestion and synthetic data.

#ifndef CSVOL_VOLUME_HPP
#define CSVOL_VOLUME_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "csvol/core_indexing.hpp"
#include "csvol/error.hpp"

namespace csvol {

struct Dims {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;

  constexpr std::uint64_t count() const { return std::uint64_t(x) * y * z; }
  constexpr std::uint32_t operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

/// ceil(d / 2^shift) per axis.
constexpr Dims shrink_dims(const Dims& d, int shift) {
  const std::uint32_t add = (1U << shift) - 1;
  return {(d.x + add) >> shift, (d.y + add) >> shift, (d.z + add) >> shift};
}

/// Dense x-fastest label array.
struct Volume {
  Dims dims;
  int label_width = 32;  // width of the original on-disk labels, 16 or 32
  std::vector<Label> labels;

  Volume() = default;
  Volume(Dims d, Label fill = 0) : dims(d), labels(d.count(), fill) {}

  std::uint64_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return (std::uint64_t(z) * dims.y + y) * dims.x + x;
  }
  Label& at(std::uint32_t x, std::uint32_t y, std::uint32_t z) { return labels[index(x, y, z)]; }
  Label at(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
    return labels[index(x, y, z)];
  }
  std::uint64_t original_bytes() const { return dims.count() * (label_width / 8); }

  friend bool operator==(const Volume&, const Volume&) = default;
};

/// Slice-wise access so that compression can stream volumes that do not fit
/// in memory.
class VolumeSource {
 public:
  virtual ~VolumeSource() = default;
  virtual Dims dims() const = 0;
  virtual int label_width() const = 0;
  /// Fills `out` with z-slices [z0, z0 + count), x-fastest.
  virtual void read_slices(std::uint32_t z0, std::uint32_t count, std::span<Label> out) const = 0;
};

class InMemorySource final : public VolumeSource {
 public:
  explicit InMemorySource(const Volume& v) : volume_(&v) {}
  Dims dims() const override { return volume_->dims; }
  int label_width() const override { return volume_->label_width; }
  void read_slices(std::uint32_t z0, std::uint32_t count, std::span<Label> out) const override {
    const std::uint64_t slice = std::uint64_t(volume_->dims.x) * volume_->dims.y;
    std::copy_n(volume_->labels.begin() + static_cast<std::ptrdiff_t>(z0 * slice),
                slice * count, out.begin());
  }

 private:
  const Volume* volume_;
};

struct RawMeta {
  Dims dims;
  int label_width = 32;
};

inline std::string default_sidecar_path(const std::string& raw_path) { return raw_path + ".meta"; }

inline RawMeta parse_sidecar(std::istream& in, const std::string& origin) {
  RawMeta meta;
  bool have_dims = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
    std::istringstream value(line.substr(eq + 1));
    if (key == "dims") {
      long long x = 0, y = 0, z = 0;
      if (!(value >> x >> y >> z) || x < 1 || y < 1 || z < 1 || x > UINT32_MAX ||
          y > UINT32_MAX || z > UINT32_MAX) {
        throw Error(ErrorKind::kIngestion, origin + ": dims needs three positive integers");
      }
      meta.dims = {std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)};
      have_dims = true;
    } else if (key == "width") {
      if (!(value >> meta.label_width) || (meta.label_width != 16 && meta.label_width != 32)) {
        throw Error(ErrorKind::kIngestion, origin + ": width must be 16 or 32");
      }
    }
  }
  if (!have_dims) throw Error(ErrorKind::kIngestion, origin + ": missing dims");
  return meta;
}

inline RawMeta read_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIngestion, "cannot open sidecar " + path);
  return parse_sidecar(in, path);
}

inline void write_sidecar(const std::string& path, const RawMeta& meta) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write sidecar " + path);
  out << "# csvol raw label volume, little-endian, x-fastest\n"
      << "dims = " << meta.dims.x << ' ' << meta.dims.y << ' ' << meta.dims.z << '\n'
      << "width = " << meta.label_width << '\n';
}

namespace detail {

inline void decode_labels(const unsigned char* bytes, std::size_t count, int width, Label* out) {
  if (width == 16) {
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = Label(bytes[2 * i]) | (Label(bytes[2 * i + 1]) << 8);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* p = bytes + 4 * i;
      out[i] = Label(p[0]) | (Label(p[1]) << 8) | (Label(p[2]) << 16) | (Label(p[3]) << 24);
    }
  }
}

}  // namespace detail

/// Raw label file read slab by slab from disk.
class RawFileSource final : public VolumeSource {
 public:
  RawFileSource(const std::string& path, const RawMeta& meta) : path_(path), meta_(meta) {
    in_.open(path, std::ios::binary);
    if (!in_) throw Error(ErrorKind::kIngestion, "cannot open " + path);
    in_.seekg(0, std::ios::end);
    const std::uint64_t actual = static_cast<std::uint64_t>(in_.tellg());
    const std::uint64_t expected = meta.dims.count() * (meta.label_width / 8);
    if (actual != expected) {
      throw Error(ErrorKind::kIngestion, path + ": sidecar declares " + std::to_string(expected) +
                                             " bytes, file has " + std::to_string(actual));
    }
  }

  Dims dims() const override { return meta_.dims; }
  int label_width() const override { return meta_.label_width; }

  void read_slices(std::uint32_t z0, std::uint32_t count, std::span<Label> out) const override {
    const std::uint64_t slice = std::uint64_t(meta_.dims.x) * meta_.dims.y;
    const std::uint64_t bytes_per = meta_.label_width / 8;
    std::vector<unsigned char> buf(slice * count * bytes_per);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(z0 * slice * bytes_per));
    in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in_) throw Error(ErrorKind::kIngestion, path_ + ": short read at slice " + std::to_string(z0));
    detail::decode_labels(buf.data(), slice * count, meta_.label_width, out.data());
  }

 private:
  std::string path_;
  RawMeta meta_;
  mutable std::ifstream in_;
};

/// Loads a raw volume; 16-bit labels are widened and the width remembered.
inline Volume load_raw(const std::string& path, const RawMeta& meta) {
  RawFileSource src(path, meta);
  Volume v(meta.dims);
  v.label_width = meta.label_width;
  src.read_slices(0, meta.dims.z, v.labels);
  return v;
}

inline Volume load_raw(const std::string& path) {
  return load_raw(path, read_sidecar(default_sidecar_path(path)));
}

/// Writes labels at the volume's original width plus the sidecar next to it.
inline void save_raw(const Volume& v, const std::string& path) {
  const int width = v.label_width;
  std::vector<unsigned char> buf(v.labels.size() * (width / 8));
  for (std::size_t i = 0; i < v.labels.size(); ++i) {
    const Label l = v.labels[i];
    if (width == 16) {
      if (l > 0xFFFF) {
        throw Error(ErrorKind::kIo, "label " + std::to_string(l) + " does not fit 16 bits");
      }
      buf[2 * i] = l & 0xFF;
      buf[2 * i + 1] = (l >> 8) & 0xFF;
    } else {
      for (int k = 0; k < 4; ++k) buf[4 * i + k] = (l >> (8 * k)) & 0xFF;
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path);
  write_sidecar(default_sidecar_path(path), {v.dims, width});
}

/// Seeded multi-source flood fill: `regions` distinct seed voxels grow
/// breadth-first (6-connected) in lockstep until the volume is covered. Each
/// label in [0, regions) forms one connected region.
inline Volume gen_synthetic(std::uint64_t seed, Dims dims, std::uint32_t regions) {
  if (dims.count() == 0) throw Error(ErrorKind::kConfiguration, "volume dims must be >= 1");
  if (regions == 0) throw Error(ErrorKind::kConfiguration, "region count must be >= 1");
  if (regions > dims.count()) {
    throw Error(ErrorKind::kConfiguration, "region count " + std::to_string(regions) +
                                               " exceeds voxel count " +
                                               std::to_string(dims.count()));
  }
  constexpr Label kUnset = ~Label{0};
  Volume v(dims, kUnset);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, dims.count() - 1);
  std::deque<std::uint64_t> frontier;
  for (std::uint32_t r = 0; r < regions;) {
    const std::uint64_t i = pick(rng);
    if (v.labels[i] != kUnset) continue;
    v.labels[i] = r++;
    frontier.push_back(i);
  }
  const std::uint64_t sx = dims.x;
  const std::uint64_t sxy = std::uint64_t(dims.x) * dims.y;
  while (!frontier.empty()) {
    const std::uint64_t i = frontier.front();
    frontier.pop_front();
    const Label label = v.labels[i];
    const std::uint64_t x = i % sx;
    const std::uint64_t y = (i / sx) % dims.y;
    const std::uint64_t z = i / sxy;
    auto visit = [&](std::uint64_t j) {
      if (v.labels[j] == kUnset) {
        v.labels[j] = label;
        frontier.push_back(j);
      }
    };
    if (x > 0) visit(i - 1);
    if (x + 1 < dims.x) visit(i + 1);
    if (y > 0) visit(i - sx);
    if (y + 1 < dims.y) visit(i + sx);
    if (z > 0) visit(i - sxy);
    if (z + 1 < dims.z) visit(i + sxy);
  }
  return v;
}

}  // namespace csvol

#endif  // CSVOL_VOLUME_HPP
