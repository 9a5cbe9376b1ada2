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

// Software raymarcher over cached bricks plus the uncompressed reference
// renderer. Both share one marching routine so that a warm cache at level 0
// reproduces the reference image bit for bit.
//
// Volume space is voxel units: voxel (x, y, z) covers [x, x+1) x [y, y+1) x
// [z, z+1). Every ray is sampled on a fixed lattice t_k = t0 + (k + 1/2) h.
// A brick sampled at level s visits every 2^s-th lattice point, counted from
// the first lattice point inside the brick, so skipping a brick or sampling
// it coarsely never shifts the samples of the next one.

#ifndef CSVOL_RENDERER_HPP
#define CSVOL_RENDERER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csvol/brick_cache.hpp"
#include "csvol/brick_codec.hpp"
#include "csvol/container.hpp"
#include "csvol/error.hpp"
#include "csvol/parallel.hpp"
#include "csvol/volume.hpp"

namespace csvol {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(Vec3 a) { return a * (1.0 / length(a)); }

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

/// Pinhole camera. forward and up are orthonormalized on construction.
class Camera {
 public:
  Camera(Vec3 position, Vec3 forward, Vec3 up, double fov_y, std::uint32_t width, std::uint32_t height)
      : position_(position), fov_y_(fov_y), width_(width), height_(height) {
    if (!(fov_y > 0 && fov_y < std::numbers::pi)) throw Error(ErrorKind::kConfiguration, "fov must lie in (0, pi)");
    if (width == 0 || height == 0) throw Error(ErrorKind::kConfiguration, "image size must be positive");
    if (!(length(forward) > 1e-12)) throw Error(ErrorKind::kConfiguration, "camera forward is zero");
    forward_ = normalize(forward);
    const Vec3 r = cross(forward_, up);
    if (!(length(r) > 1e-9)) throw Error(ErrorKind::kConfiguration, "camera up is parallel to forward");
    right_ = normalize(r);
    up_ = cross(right_, forward_);
    tan_half_ = std::tan(fov_y / 2);
  }

  static Camera look_at(Vec3 position, Vec3 target, Vec3 up, double fov_y, std::uint32_t width,
                        std::uint32_t height) {
    return Camera(position, target - position, up, fov_y, width, height);
  }

  Vec3 position() const { return position_; }
  Vec3 forward() const { return forward_; }
  Vec3 up() const { return up_; }
  Vec3 right() const { return right_; }
  double fov_y() const { return fov_y_; }
  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }

  Ray ray(std::uint32_t px, std::uint32_t py) const {
    const double aspect = double(width_) / double(height_);
    const double u = (2.0 * (px + 0.5) / width_ - 1.0) * tan_half_ * aspect;
    const double v = (1.0 - 2.0 * (py + 0.5) / height_) * tan_half_;
    return {position_, normalize(forward_ + right_ * u + up_ * v)};
  }

 private:
  Vec3 position_, forward_, up_, right_;
  double fov_y_, tan_half_ = 0;
  std::uint32_t width_, height_;
};

struct Rgba {
  float r = 0, g = 0, b = 0, a = 0;
  friend bool operator==(const Rgba&, const Rgba&) = default;
};

/// Label -> colour and opacity. Labels without an override get a colour
/// hashed from the label and the default opacity.
class TransferFunction {
 public:
  float default_alpha = 1.0f;
  std::unordered_map<Label, Rgba> overrides;

  static Rgba hash_color(Label label, float alpha) {
    std::uint64_t h = label + 0x9E3779B97F4A7C15ULL;
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL;
    h ^= h >> 31;
    auto channel = [&](int shift) { return 0.25f + 0.75f * float((h >> shift) & 0xFF) / 255.0f; };
    return {channel(0), channel(8), channel(16), alpha};
  }

  Rgba lookup(Label label) const {
    if (!overrides.empty()) {
      const auto it = overrides.find(label);
      if (it != overrides.end()) return it->second;
    }
    return hash_color(label, default_alpha);
  }

  bool visible(Label label) const { return lookup(label).a > 0; }
};

/// True iff some palette label is visible; no decoding needed.
inline bool brick_visible(std::span<const Label> palette, const TransferFunction& tf) {
  return std::any_of(palette.begin(), palette.end(), [&](Label l) { return tf.visible(l); });
}

/// Level at which one voxel of a brick at distance d covers about one pixel:
/// clamp(ceil(log2(max(1, d * 2 tan(fov/2) / (height * v)))), 0, N).
inline int select_lod(double distance, double voxel_extent, const Camera& camera, int max_level) {
  const double footprint = distance * 2.0 * std::tan(camera.fov_y() / 2) / (camera.height() * voxel_extent);
  const double t = std::ceil(std::log2(std::max(1.0, footprint)));
  return static_cast<int>(std::clamp(t, 0.0, double(max_level)));
}

struct RenderOptions {
  bool shadows = true;
  bool skip_empty = true;
  int forced_lod = -1;  // >= 0 overrides select_lod
  double step = 0.5;    // lattice spacing in level-0 voxels
  double early_termination = 0.99;
  double shadow_threshold = 0.5;
  double shadow_cutoff = 0.01;
  double ambient = 0.35;
  Vec3 light_dir = normalize(Vec3{0.3, 0.5, -0.8});  // towards the light
  Rgba background{0, 0, 0, 1};
  unsigned workers = 1;
};

/// RGBA float image, row-major from the top-left pixel; rgb already
/// composited over the background, alpha is the accumulated opacity.
struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> rgba;

  Image() = default;
  Image(std::uint32_t w, std::uint32_t h) : width(w), height(h), rgba(std::size_t(w) * h * 4, 0.0f) {}

  float* pixel(std::uint32_t x, std::uint32_t y) { return rgba.data() + (std::size_t(y) * width + x) * 4; }
  const float* pixel(std::uint32_t x, std::uint32_t y) const {
    return rgba.data() + (std::size_t(y) * width + x) * 4;
  }

  std::vector<std::uint8_t> to_rgb8() const {
    std::vector<std::uint8_t> out(std::size_t(width) * height * 3);
    for (std::size_t i = 0; i < std::size_t(width) * height; ++i) {
      for (int c = 0; c < 3; ++c) {
        out[3 * i + c] = static_cast<std::uint8_t>(std::lround(std::clamp(rgba[4 * i + c], 0.0f, 1.0f) * 255.0f));
      }
    }
    return out;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct RenderTally {
  std::uint64_t samples = 0;
  std::uint64_t coarse_samples = 0;  // taken at a coarser level than desired
  std::uint64_t shadow_rays = 0;

  void add(const RenderTally& o) {
    samples += o.samples;
    coarse_samples += o.coarse_samples;
    shadow_rays += o.shadow_rays;
  }
};

struct FrameRequest {
  std::vector<BrickRequest> requests;  // ascending brick id
  std::uint64_t detail_demand_bytes = 0;
  RenderTally tally;
};

namespace detail {

struct Voxel {
  std::uint32_t x = 0, y = 0, z = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
};

/// Ray parameter interval inside the axis-aligned box [lo, hi].
inline std::pair<double, double> box_interval(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
  double tn = -std::numeric_limits<double>::infinity();
  double tf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return {1, 0};
      continue;
    }
    double t1 = (lo[a] - o[a]) / d[a];
    double t2 = (hi[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    tn = std::max(tn, t1);
    tf = std::min(tf, t2);
  }
  return {tn, tf};
}

/// What the marcher needs to know about the brick a sample falls into.
struct BrickView {
  bool visible = true;
  int lod = 0;       // level the labels are read at
  int desired = 0;   // level the brick should be sampled at
  std::uint32_t origin[3] = {0, 0, 0};
  const Label* data = nullptr;  // Morton order at `lod`; null means `constant`
  Label constant = 0;
};

/// Shared marching and compositing. Sampler supplies brick_of, brick_exit,
/// enter and label.
template <class Sampler>
class Marcher {
 public:
  Marcher(const Sampler& s, Dims dims, const TransferFunction& tf, const RenderOptions& opt)
      : s_(s), dims_(dims), tf_(tf), opt_(opt) {}

  Voxel voxel_at(const Vec3& o, const Vec3& d, double t) const {
    auto axis = [&](double p, std::uint32_t n) {
      const double f = std::floor(p);
      if (!(f > 0)) return std::uint32_t{0};
      if (f >= double(n - 1)) return n - 1;
      return static_cast<std::uint32_t>(f);
    };
    return {axis(o.x + t * d.x, dims_.x), axis(o.y + t * d.y, dims_.y), axis(o.z + t * d.z, dims_.z)};
  }

  /// Calls visit(label, stride, voxel, t) for the samples of [t0, t1) until
  /// it returns false. Bricks behind that point are still touched, so the
  /// set of flagged bricks depends on geometry and visibility only.
  template <class Visit>
  void walk(const Vec3& o, const Vec3& d, double t0, double t1, RenderTally& tally, Visit&& visit) const {
    const double h = opt_.step;
    const double span = (t1 - t0) / h - 0.5;
    if (!(span > 0)) return;
    const auto count = static_cast<std::int64_t>(std::ceil(span));
    auto t_of = [&](std::int64_t k) { return t0 + (double(k) + 0.5) * h; };
    auto brick_at = [&](std::int64_t k) { return s_.brick_of(voxel_at(o, d, t_of(k))); };
    std::int64_t k = 0;
    bool done = false;
    while (k < count) {
      const Voxel v = voxel_at(o, d, t_of(k));
      const std::uint64_t b = s_.brick_of(v);
      // First lattice index past this brick: estimate, then settle exactly.
      const double te = s_.brick_exit(b, o, d);
      std::int64_t e = count;
      if (te < t1) {
        const double x = std::ceil((te - t0) / h - 0.5);
        e = static_cast<std::int64_t>(std::clamp(x, double(k + 1), double(count)));
      }
      while (e > k + 1 && brick_at(e - 1) != b) --e;
      while (e < count && brick_at(e) == b) ++e;

      if (done) {
        s_.touch(b);
        k = e;
        continue;
      }
      const BrickView view = s_.enter(b);
      if (!view.visible && opt_.skip_empty) {
        k = e;
        continue;
      }
      const std::int64_t m = view.visible ? (std::int64_t{1} << view.lod) : 1;
      for (std::int64_t j = k; j < e; j += m) {
        const Voxel vj = j == k ? v : voxel_at(o, d, t_of(j));
        ++tally.samples;
        if (view.visible && view.lod > view.desired) ++tally.coarse_samples;
        if (!visit(s_.label(view, vj), m, vj, t_of(j))) {
          done = true;
          break;
        }
      }
      k = e;
    }
  }

  double transmittance(const Vec3& p, const Voxel& start, RenderTally& tally) const {
    const Vec3& L = opt_.light_dir;
    const auto [tn, tf] = box_interval(p, L, {0, 0, 0}, {double(dims_.x), double(dims_.y), double(dims_.z)});
    (void)tn;
    double T = 1.0;
    ++tally.shadow_rays;
    walk(p, L, 0.0, tf, tally, [&](Label label, std::int64_t m, const Voxel& v, double) {
      if (v == start) return true;
      const Rgba c = tf_.lookup(label);
      if (c.a <= 0) return true;
      const double a = m == 1 ? double(c.a) : 1.0 - std::pow(1.0 - double(c.a), double(m));
      T *= 1.0 - a;
      return T > opt_.shadow_cutoff;
    });
    return T;
  }

  void shade(const Ray& ray, float* out, RenderTally& tally) const {
    const auto [tn, tf] =
        box_interval(ray.origin, ray.dir, {0, 0, 0}, {double(dims_.x), double(dims_.y), double(dims_.z)});
    const double t0 = std::max(tn, 0.0);
    double r = 0, g = 0, b = 0, A = 0;
    if (tf > t0) {
      walk(ray.origin, ray.dir, t0, tf, tally, [&](Label label, std::int64_t m, const Voxel& v, double t) {
        const Rgba c = tf_.lookup(label);
        if (c.a <= 0) return true;
        const double a = m == 1 ? double(c.a) : 1.0 - std::pow(1.0 - double(c.a), double(m));
        double light = 1.0;
        if (opt_.shadows && c.a >= opt_.shadow_threshold) {
          light = opt_.ambient + (1.0 - opt_.ambient) * transmittance(ray.origin + ray.dir * t, v, tally);
        }
        const double w = (1.0 - A) * a;
        r += w * c.r * light;
        g += w * c.g * light;
        b += w * c.b * light;
        A += w;
        return A < opt_.early_termination;
      });
    }
    const auto& bg = opt_.background;
    out[0] = float(r + (1.0 - A) * bg.r);
    out[1] = float(g + (1.0 - A) * bg.g);
    out[2] = float(b + (1.0 - A) * bg.b);
    out[3] = float(A);
  }

  Image render(const Camera& camera, RenderTally& total) const {
    Image img(camera.width(), camera.height());
    std::vector<RenderTally> rows(camera.height());
    parallel_for(camera.height(), std::max(1U, opt_.workers), [&](std::size_t y) {
      for (std::uint32_t x = 0; x < camera.width(); ++x) {
        shade(camera.ray(x, static_cast<std::uint32_t>(y)), img.pixel(x, static_cast<std::uint32_t>(y)), rows[y]);
      }
    });
    for (const auto& t : rows) total.add(t);
    return img;
  }

 private:
  const Sampler& s_;
  Dims dims_;
  const TransferFunction& tf_;
  const RenderOptions& opt_;
};

/// The whole volume as one brick at full resolution.
class VolumeSampler {
 public:
  explicit VolumeSampler(const Volume& v) : v_(v) {}
  std::uint64_t brick_of(const Voxel&) const { return 0; }
  double brick_exit(std::uint64_t, const Vec3&, const Vec3&) const {
    return std::numeric_limits<double>::infinity();
  }
  BrickView enter(std::uint64_t) const { return {}; }
  void touch(std::uint64_t) const {}
  Label label(const BrickView&, const Voxel& p) const { return v_.at(p.x, p.y, p.z); }

 private:
  const Volume& v_;
};

/// Bricks of a container, read from the cache when resident and from the
/// palette root otherwise. Marks visible bricks used at their desired level.
class CacheSampler {
 public:
  CacheSampler(const Container& c, BrickCache& cache, const Camera& camera, const TransferFunction& tf,
               const RenderOptions& opt)
      : c_(c), cache_(cache), meta_(c.meta()), log2_(c.config().brick_log2) {
    const std::uint64_t n = c.brick_count();
    const int max_level = c.config().max_level();
    visible_.resize(n);
    desired_.resize(n);
    const double half = c.config().side() / 2.0;
    for (std::uint64_t b = 0; b < n; ++b) {
      visible_[b] = brick_visible(c.palette(b), tf);
      if (opt.forced_lod >= 0) {
        desired_[b] = static_cast<std::uint8_t>(std::min(opt.forced_lod, max_level));
        continue;
      }
      const auto bc = meta_.brick_coord(b);
      const Vec3 center{bc[0] * 2 * half + half, bc[1] * 2 * half + half, bc[2] * 2 * half + half};
      const double d = std::max(length(center - camera.position()), 1e-9);
      desired_[b] = static_cast<std::uint8_t>(select_lod(d, 1.0, camera, max_level));
    }
  }

  std::uint64_t brick_of(const Voxel& p) const {
    return meta_.brick_index(p.x >> log2_, p.y >> log2_, p.z >> log2_);
  }

  double brick_exit(std::uint64_t b, const Vec3& o, const Vec3& d) const {
    const auto bc = meta_.brick_coord(b);
    const double s = double(1U << log2_);
    const Vec3 lo{bc[0] * s, bc[1] * s, bc[2] * s};
    return box_interval(o, d, lo, lo + Vec3{s, s, s}).second;
  }

  BrickView enter(std::uint64_t b) const {
    BrickView v;
    const auto bc = meta_.brick_coord(b);
    for (int a = 0; a < 3; ++a) v.origin[a] = bc[a] << log2_;
    v.visible = visible_[b] != 0;
    v.desired = desired_[b];
    // A constant brick is complete at every level through its palette.
    if (c_.record(b).is_constant()) {
      v.lod = v.desired;
      v.constant = decode_root(c_.palette(b));
      return v;
    }
    if (v.visible) cache_.mark_used(b, v.desired);
    const int n = c_.config().max_level();
    const auto r = v.desired < n ? cache_.lookup(b) : std::nullopt;
    if (r) {
      v.lod = r->lod;
      v.data = cache_.data(*r).data();
    } else {
      v.lod = n;
      v.constant = decode_root(c_.palette(b));
    }
    return v;
  }

  void touch(std::uint64_t b) const {
    if (visible_[b] && !c_.record(b).is_constant()) cache_.mark_used(b, desired_[b]);
  }

  Label label(const BrickView& v, const Voxel& p) const {
    if (v.data == nullptr) return v.constant;
    const int s = v.lod;
    return v.data[morton_encode((p.x - v.origin[0]) >> s, (p.y - v.origin[1]) >> s, (p.z - v.origin[2]) >> s)];
  }

 private:
  const Container& c_;
  BrickCache& cache_;
  const VolumeMeta& meta_;
  int log2_;
  std::vector<std::uint8_t> visible_;
  std::vector<std::uint8_t> desired_;
};

}  // namespace detail

/// Renders one frame against a cache in its read phase. Visible bricks that
/// are touched get marked; the returned request lists those not resident at
/// their desired level. Call cache.begin_frame() first.
inline std::pair<Image, FrameRequest> render_frame(const Container& c, BrickCache& cache, const Camera& camera,
                                                   const TransferFunction& tf, const RenderOptions& opt) {
  detail::CacheSampler sampler(c, cache, camera, tf, opt);
  detail::Marcher<detail::CacheSampler> marcher(sampler, c.meta().dims, tf, opt);
  FrameRequest req;
  Image img = marcher.render(camera, req.tally);
  req.requests = cache.collect_requests();
  for (const auto& r : req.requests) {
    if (r.lod == 0) req.detail_demand_bytes += c.record(r.brick).detail_bytes;
  }
  return {std::move(img), std::move(req)};
}

/// Brute-force oracle over the raw volume at full resolution.
inline Image reference_render(const Volume& v, const Camera& camera, const TransferFunction& tf,
                              const RenderOptions& opt, RenderTally* tally = nullptr) {
  detail::VolumeSampler sampler(v);
  detail::Marcher<detail::VolumeSampler> marcher(sampler, v.dims, tf, opt);
  RenderTally t;
  Image img = marcher.render(camera, t);
  if (tally != nullptr) *tally = t;
  return img;
}

}  // namespace csvol

#endif  // CSVOL_RENDERER_HPP
