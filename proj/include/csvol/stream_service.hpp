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

// Session service: each session owns a frame loop over a shared container,
// takes camera / transfer-function / option updates as JSON messages and
// hands out rendered frames as binary messages. The HTTP binding is a thin
// layer over Session and StreamService; see docs/protocol.md.

#ifndef CSVOL_STREAM_SERVICE_HPP
#define CSVOL_STREAM_SERVICE_HPP

#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "csvol/container.hpp"
#include "csvol/frame_loop.hpp"
#include "csvol/image_io.hpp"
#include "csvol/renderer.hpp"

namespace csvol {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::array<char, 4> kFrameMagic = {'C', 'S', 'V', 'F'};
inline constexpr std::size_t kFrameHeaderBytes = 76;

enum class FrameEncoding : std::uint16_t { kPng = 1, kJpeg = 2 };

struct ServiceOptions {
  std::uint32_t width = 512;
  std::uint32_t height = 512;
  FrameEncoding encoding = FrameEncoding::kPng;
  int jpeg_quality = 85;
  bool shadows = true;
  double fov = 0.8;
  std::uint64_t detail_budget = kDefaultDetailBudget;
  std::uint64_t pool_elements = kDefaultPoolElements;
  unsigned workers = 1;
};

/// Binary frame message, little-endian:
///   magic "CSVF", u16 version, u16 encoding, u32 frame, u32 width,
///   u32 height, f32 raymarch/decompress/assign/total ms, u32 requests,
///   u32 placements, u32 downgraded, u64 decoded bytes, u64 detail bytes
///   fetched, u64 detail bytes pending, u32 payload length, payload.
struct FrameMessage {
  std::uint32_t frame = 0;
  FrameEncoding encoding = FrameEncoding::kPng;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  float raymarch_ms = 0, decompress_ms = 0, assign_ms = 0, total_ms = 0;
  std::uint32_t requests = 0, placements = 0, downgraded = 0;
  std::uint64_t decoded_bytes = 0, detail_fetched_bytes = 0, detail_pending_bytes = 0;
  std::vector<std::uint8_t> payload;

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderBytes + payload.size());
    detail::ByteWriter w(out);
    for (char c : kFrameMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.put<std::uint16_t>(kProtocolVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(encoding));
    w.put<std::uint32_t>(frame);
    w.put<std::uint32_t>(width);
    w.put<std::uint32_t>(height);
    for (float f : {raymarch_ms, decompress_ms, assign_ms, total_ms}) w.put<std::uint32_t>(std::bit_cast<std::uint32_t>(f));
    w.put<std::uint32_t>(requests);
    w.put<std::uint32_t>(placements);
    w.put<std::uint32_t>(downgraded);
    w.put<std::uint64_t>(decoded_bytes);
    w.put<std::uint64_t>(detail_fetched_bytes);
    w.put<std::uint64_t>(detail_pending_bytes);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
    w.put_bytes(payload);
    return out;
  }

  static FrameMessage parse(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    for (char c : kFrameMagic) {
      if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) {
        throw Error(ErrorKind::kCorruptStream, "bad frame magic");
      }
    }
    if (r.get<std::uint16_t>() != kProtocolVersion) throw Error(ErrorKind::kCorruptStream, "bad frame version");
    FrameMessage m;
    m.encoding = static_cast<FrameEncoding>(r.get<std::uint16_t>());
    m.frame = r.get<std::uint32_t>();
    m.width = r.get<std::uint32_t>();
    m.height = r.get<std::uint32_t>();
    for (float* f : {&m.raymarch_ms, &m.decompress_ms, &m.assign_ms, &m.total_ms}) {
      *f = std::bit_cast<float>(r.get<std::uint32_t>());
    }
    m.requests = r.get<std::uint32_t>();
    m.placements = r.get<std::uint32_t>();
    m.downgraded = r.get<std::uint32_t>();
    m.decoded_bytes = r.get<std::uint64_t>();
    m.detail_fetched_bytes = r.get<std::uint64_t>();
    m.detail_pending_bytes = r.get<std::uint64_t>();
    const auto n = r.get<std::uint32_t>();
    const auto p = r.take(n);
    m.payload.assign(p.begin(), p.end());
    if (r.pos() != bytes.size()) throw Error(ErrorKind::kCorruptStream, "trailing bytes after frame payload");
    return m;
  }
};

/// A camera a little outside the volume, looking at its centre.
inline Camera default_camera(const Dims& d, const ServiceOptions& o) {
  const Vec3 center{d.x / 2.0, d.y / 2.0, d.z / 2.0};
  const double r = 1.6 * std::max({d.x, d.y, d.z});
  const Vec3 pos = center + Vec3{std::cos(0.4) * std::cos(0.6), std::sin(0.4), std::cos(0.4) * std::sin(0.6)} * r;
  return Camera::look_at(pos, center, {0, 1, 0}, o.fov, o.width, o.height);
}

namespace detail {

using nlohmann::json;

inline Vec3 json_vec3(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::kConfiguration, std::string("missing field ") + key);
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
    throw Error(ErrorKind::kConfiguration, std::string(key) + " must be an array of 3 numbers");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

inline float json_unit(const json& v, const std::string& what) {
  if (!v.is_number()) throw Error(ErrorKind::kConfiguration, what + " must be a number");
  const double x = v.get<double>();
  if (!(x >= 0 && x <= 1)) throw Error(ErrorKind::kConfiguration, what + " must lie in [0, 1]");
  return static_cast<float>(x);
}

inline TransferFunction parse_tf(const json& m) {
  TransferFunction tf;
  if (m.contains("default_alpha")) tf.default_alpha = json_unit(m.at("default_alpha"), "default_alpha");
  if (m.contains("overrides")) {
    const json& list = m.at("overrides");
    if (!list.is_array()) throw Error(ErrorKind::kConfiguration, "overrides must be an array");
    for (const json& o : list) {
      if (!o.is_object() || !o.contains("label") || !o.at("label").is_number_integer() ||
          o.at("label").get<std::int64_t>() < 0 || o.at("label").get<std::int64_t>() > 0xFFFFFFFFLL) {
        throw Error(ErrorKind::kConfiguration, "override label must be an integer in [0, 2^32)");
      }
      const auto label = o.at("label").get<std::uint64_t>();
      Rgba c = TransferFunction::hash_color(static_cast<Label>(label), tf.default_alpha);
      if (o.contains("rgba")) {
        const json& v = o.at("rgba");
        if (!v.is_array() || (v.size() != 3 && v.size() != 4)) {
          throw Error(ErrorKind::kConfiguration, "rgba must hold 3 or 4 numbers");
        }
        c.r = json_unit(v[0], "rgba");
        c.g = json_unit(v[1], "rgba");
        c.b = json_unit(v[2], "rgba");
        if (v.size() == 4) c.a = json_unit(v[3], "rgba");
      }
      if (o.contains("alpha")) c.a = json_unit(o.at("alpha"), "alpha");
      tf.overrides[static_cast<Label>(label)] = c;
    }
  }
  return tf;
}

}  // namespace detail

/// One client's view: camera, transfer function, options and a private
/// frame loop. Messages may arrive while a frame renders; they are queued
/// and applied when the next frame starts.
class Session {
 public:
  using json = nlohmann::json;

  Session(std::uint64_t id, std::shared_ptr<const Container> c, std::shared_ptr<DetailStore> store,
          ServiceOptions opt)
      : id_(id),
        c_(c),
        opt_(opt),
        camera_(default_camera(c->meta().dims, opt)),
        loop_(c, std::move(store), loop_options(opt)) {}

  std::uint64_t id() const { return id_; }

  json handle_text(const std::string& text) {
    json m;
    try {
      m = json::parse(text);
    } catch (const json::exception& e) {
      return error("malformed JSON: " + std::string(e.what()));
    }
    return handle_message(m);
  }

  /// Validates a control message. Updates are queued for the next frame;
  /// a malformed message yields an error reply and leaves the session as
  /// it was.
  json handle_message(const json& m) {
    try {
      if (!m.is_object() || !m.contains("type") || !m.at("type").is_string()) {
        return error("message must be an object with a string type");
      }
      if (m.contains("version") && m.at("version") != kProtocolVersion) {
        return error("unsupported protocol version");
      }
      const std::string type = m.at("type").get<std::string>();
      if (type == "camera") {
        const double fov = m.contains("fov") ? m.at("fov").get<double>() : opt_.fov;
        std::lock_guard<std::mutex> lock(pending_mutex_);
        const auto size = pending_size();
        Camera cam(detail::json_vec3(m, "position"), detail::json_vec3(m, "forward"), detail::json_vec3(m, "up"),
                   fov, size.first, size.second);
        pending_camera_ = cam;
        return ack(type);
      }
      if (type == "tf") {
        TransferFunction tf = detail::parse_tf(m);
        std::lock_guard<std::mutex> lock(pending_mutex_);
        pending_tf_ = std::move(tf);
        return ack(type);
      }
      if (type == "options") {
        std::lock_guard<std::mutex> lock(pending_mutex_);
        ServiceOptions o = pending_options_.value_or(opt_);
        if (m.contains("width")) o.width = m.at("width").get<std::uint32_t>();
        if (m.contains("height")) o.height = m.at("height").get<std::uint32_t>();
        if (o.width == 0 || o.height == 0 || o.width > 4096 || o.height > 4096) {
          return error("image size must lie in [1, 4096]");
        }
        if (m.contains("encoding")) {
          const auto e = m.at("encoding").get<std::string>();
          if (e == "png") {
            o.encoding = FrameEncoding::kPng;
          } else if (e == "jpeg") {
            o.encoding = FrameEncoding::kJpeg;
          } else {
            return error("encoding must be png or jpeg");
          }
        }
        if (m.contains("quality")) {
          o.jpeg_quality = m.at("quality").get<int>();
          if (o.jpeg_quality < 1 || o.jpeg_quality > 100) return error("quality must lie in [1, 100]");
        }
        if (m.contains("shadows")) o.shadows = m.at("shadows").get<bool>();
        pending_options_ = o;
        return ack(type);
      }
      if (type == "stats_request") {
        json s = stats();
        s["type"] = "stats";
        return s;
      }
      return error("unknown message type '" + type + "'");
    } catch (const Error& e) {
      return error(e.what());
    } catch (const json::exception& e) {
      return error(std::string("bad field: ") + e.what());
    }
  }

  /// Applies queued updates, runs one frame-loop step and encodes the image.
  FrameMessage next_frame() {
    std::lock_guard<std::mutex> frame_lock(frame_mutex_);
    {
      std::lock_guard<std::mutex> lock(pending_mutex_);
      if (pending_options_) {
        opt_ = *pending_options_;
        pending_options_.reset();
        camera_ = Camera(camera_.position(), camera_.forward(), camera_.up(), camera_.fov_y(), opt_.width,
                         opt_.height);
      }
      if (pending_camera_) {
        camera_ = Camera(pending_camera_->position(), pending_camera_->forward(), pending_camera_->up(),
                         pending_camera_->fov_y(), opt_.width, opt_.height);
        pending_camera_.reset();
      }
      if (pending_tf_) {
        tf_ = std::move(*pending_tf_);
        pending_tf_.reset();
      }
    }
    loop_.render_options().shadows = opt_.shadows;
    auto [image, rep] = loop_.step(camera_, tf_);
    FrameMessage f;
    f.frame = static_cast<std::uint32_t>(rep.frame);
    f.encoding = opt_.encoding;
    f.width = image.width;
    f.height = image.height;
    f.raymarch_ms = float(rep.timings.raymarch_ms);
    f.decompress_ms = float(rep.timings.decompress_ms);
    f.assign_ms = float(rep.timings.assign_ms);
    f.total_ms = float(rep.timings.total_ms);
    f.requests = static_cast<std::uint32_t>(rep.requests.size());
    f.placements = static_cast<std::uint32_t>(rep.placements);
    f.downgraded = static_cast<std::uint32_t>(rep.downgraded);
    f.decoded_bytes = rep.decoded_bytes;
    f.detail_fetched_bytes = rep.detail.fetched_bytes;
    f.detail_pending_bytes = rep.detail.pending_bytes;
    f.payload = opt_.encoding == FrameEncoding::kPng ? encode_png(image) : encode_jpeg(image, opt_.jpeg_quality);
    {
      std::lock_guard<std::mutex> lock(stats_mutex_);
      last_ = rep;
      last_image_ = std::move(image);
      decompress_ms_total_ += rep.timings.decompress_ms;
    }
    return f;
  }

  /// The last rendered frame before encoding.
  Image last_image() const {
    std::lock_guard<std::mutex> lock(stats_mutex_);
    return last_image_;
  }

  json stats() const {
    std::lock_guard<std::mutex> lock(stats_mutex_);
    const auto& cs = last_.cache;
    const auto& k = loop_.counters();
    const double secs = decompress_ms_total_ / 1000.0;
    json s = {
        {"session", id_},
        {"frames", loop_.frame_index()},
        {"last_frame",
         {{"raymarch_ms", last_.timings.raymarch_ms},
          {"decompress_ms", last_.timings.decompress_ms},
          {"assign_ms", last_.timings.assign_ms},
          {"total_ms", last_.timings.total_ms},
          {"requests", last_.requests.size()},
          {"placements", last_.placements},
          {"downgraded", last_.downgraded},
          {"decoded_bytes", last_.decoded_bytes}}},
        {"cache",
         {{"capacity_elements", cs.capacity_elements},
          {"active_elements", cs.active_elements},
          {"occupancy", cs.occupancy()},
          {"resident_bricks", cs.resident_bricks},
          {"evictions", cs.evictions},
          {"rebuilds", cs.rebuilds}}},
        {"decode",
         {{"bricks", k.bricks.load()},
          {"decoded_bytes", k.decoded_bytes()},
          {"coarse_bytes", k.coarse_bytes.load()},
          {"detail_bytes", k.detail_bytes.load()},
          {"bytes_per_second", secs > 0 ? double(k.decoded_bytes()) / secs : 0.0}}},
        {"detail",
         {{"budget_bytes", loop_.options().detail_budget},
          {"fetched_bytes", last_.detail.fetched_bytes},
          {"pending_bytes", last_.detail.pending_bytes},
          {"budget_used", double(last_.detail.fetched_bytes) / double(loop_.options().detail_budget)}}},
    };
    return s;
  }

 private:
  static FrameLoopOptions loop_options(const ServiceOptions& o) {
    FrameLoopOptions f;
    f.render.shadows = o.shadows;
    f.render.workers = o.workers;
    f.decode_workers = o.workers;
    f.detail_budget = o.detail_budget;
    f.pool_elements = o.pool_elements;
    return f;
  }

  std::pair<std::uint32_t, std::uint32_t> pending_size() const {
    const ServiceOptions& o = pending_options_ ? *pending_options_ : opt_;
    return {o.width, o.height};
  }

  static json ack(const std::string& of) { return {{"type", "ack"}, {"of", of}}; }
  static json error(const std::string& reason) { return {{"type", "error"}, {"reason", reason}}; }

  std::uint64_t id_;
  std::shared_ptr<const Container> c_;
  ServiceOptions opt_;
  Camera camera_;
  TransferFunction tf_;
  FrameLoop loop_;

  std::mutex pending_mutex_;
  std::optional<Camera> pending_camera_;
  std::optional<TransferFunction> pending_tf_;
  std::optional<ServiceOptions> pending_options_;

  std::mutex frame_mutex_;
  mutable std::mutex stats_mutex_;
  FrameReport last_;
  Image last_image_;
  double decompress_ms_total_ = 0;
};

/// Sessions over one immutable container.
class StreamService {
 public:
  using json = nlohmann::json;
  using StoreFactory = std::function<std::shared_ptr<DetailStore>()>;

  StreamService(std::shared_ptr<const Container> c, StoreFactory stores, ServiceOptions opt)
      : c_(std::move(c)), stores_(std::move(stores)), opt_(opt) {
    std::set<Label> labels(c_->palette(0).begin(), c_->palette(0).end());
    for (std::uint64_t b = 1; b < c_->brick_count(); ++b) labels.insert(c_->palette(b).begin(), c_->palette(b).end());
    label_count_ = labels.size();
    for (Label l : labels) {
      if (sample_labels_.size() >= 256) break;
      sample_labels_.push_back(l);
    }
  }

  /// Serves a container file: hot sections in memory, detail streams read
  /// from the file on demand.
  static std::unique_ptr<StreamService> from_file(const std::string& path, ServiceOptions opt) {
    auto c = std::make_shared<const Container>(Container::load(path, false));
    auto store = std::make_shared<FileDetailStore>(path, c);
    return std::make_unique<StreamService>(c, [store] { return store; }, opt);
  }

  const Container& container() const { return *c_; }

  json metadata() const {
    const auto& m = c_->meta();
    return {{"type", "metadata"},
            {"version", kProtocolVersion},
            {"dims", {m.dims.x, m.dims.y, m.dims.z}},
            {"brick_size", m.config.side()},
            {"brick_grid", {m.brick_grid.x, m.brick_grid.y, m.brick_grid.z}},
            {"brick_count", c_->brick_count()},
            {"lod_range", {0, m.config.max_level()}},
            {"label_width", m.label_width},
            {"label_count", label_count_},
            {"labels", sample_labels_},
            {"entropy_coded", c_->entropy_coded()},
            {"compressed_bytes", c_->serialized_size()},
            {"compression_rate", c_->compression_rate()}};
  }

  std::shared_ptr<Session> create_session() {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::uint64_t id = next_id_++;
    auto s = std::make_shared<Session>(id, c_, stores_(), opt_);
    sessions_[id] = s;
    return s;
  }

  std::shared_ptr<Session> session(std::uint64_t id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  bool close_session(std::uint64_t id) {
    std::lock_guard<std::mutex> lock(mutex_);
    return sessions_.erase(id) > 0;
  }

  json stats() const {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    json list = json::array();
    for (const auto& s : all) list.push_back(s->stats());
    return {{"type", "stats"}, {"sessions", list}};
  }

  /// HTTP routes, all under /api.
  void bind(httplib::Server& server) {
    auto send_json = [](httplib::Response& res, const json& j, int status = 200) {
      res.status = status;
      res.set_content(j.dump(), "application/json");
    };
    auto find = [this, send_json](const httplib::Request& req, httplib::Response& res) -> std::shared_ptr<Session> {
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.path_params.at("id"));
      } catch (...) {
        send_json(res, {{"type", "error"}, {"reason", "bad session id"}}, 400);
        return nullptr;
      }
      auto s = session(id);
      if (!s) send_json(res, {{"type", "error"}, {"reason", "no such session"}}, 404);
      return s;
    };
    server.Get("/api/metadata", [this, send_json](const httplib::Request&, httplib::Response& res) {
      send_json(res, metadata());
    });
    server.Get("/api/stats", [this, send_json](const httplib::Request&, httplib::Response& res) {
      send_json(res, stats());
    });
    server.Post("/api/sessions", [this, send_json](const httplib::Request&, httplib::Response& res) {
      auto s = create_session();
      send_json(res, {{"type", "session"}, {"id", s->id()}, {"version", kProtocolVersion}});
    });
    server.Post("/api/sessions/:id/messages",
                [find, send_json](const httplib::Request& req, httplib::Response& res) {
                  if (auto s = find(req, res)) {
                    const json reply = s->handle_text(req.body);
                    send_json(res, reply);
                  }
                });
    server.Get("/api/sessions/:id/frame", [find, send_json](const httplib::Request& req, httplib::Response& res) {
      if (auto s = find(req, res)) {
        try {
          const auto bytes = s->next_frame().serialize();
          res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "application/octet-stream");
        } catch (const Error& e) {
          send_json(res, {{"type", "error"}, {"reason", e.what()}}, 500);
        }
      }
    });
    server.Delete("/api/sessions/:id", [this, send_json](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.path_params.at("id"));
      } catch (...) {
        send_json(res, {{"type", "error"}, {"reason", "bad session id"}}, 400);
        return;
      }
      if (close_session(id)) {
        send_json(res, {{"type", "closed"}, {"id", id}});
      } else {
        send_json(res, {{"type", "error"}, {"reason", "no such session"}}, 404);
      }
    });
  }

 private:
  std::shared_ptr<const Container> c_;
  StoreFactory stores_;
  ServiceOptions opt_;
  std::uint64_t label_count_ = 0;
  std::vector<Label> sample_labels_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace csvol

#endif  // CSVOL_STREAM_SERVICE_HPP
