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

#include <thread>

#include "csvol/stream_service.hpp"

using namespace csvol;
using nlohmann::json;

namespace {

std::shared_ptr<const Container> small_container(std::uint64_t seed = 21) {
  CompressOptions o;
  o.config = BrickConfig(4);
  return std::make_shared<const Container>(compress_volume(gen_synthetic(seed, Dims{48, 40, 44}, 60), o));
}

std::unique_ptr<StreamService> make_service(std::shared_ptr<const Container> c, ServiceOptions opt = {}) {
  opt.width = opt.height = 48;
  return std::make_unique<StreamService>(c, [c] { return std::make_shared<InMemoryDetailStore>(c); }, opt);
}

bool background(const Image& img) {
  for (std::size_t i = 3; i < img.rgba.size(); i += 4) {
    if (img.rgba[i] != 0) return false;
  }
  return true;
}

json camera_msg(Vec3 p, Vec3 target) {
  const Vec3 f = target - p;
  return {{"type", "camera"}, {"position", {p.x, p.y, p.z}}, {"forward", {f.x, f.y, f.z}}, {"up", {0, 1, 0}},
          {"fov", 0.7}};
}

}  // namespace

TEST(StreamServiceTest, MetadataEchoesContainer) {
  CompressOptions o;
  o.config = BrickConfig(5);
  auto c = std::make_shared<const Container>(compress_volume(gen_synthetic(1, Dims{128, 128, 128}, 500), o));
  auto svc = make_service(c);
  const json m = svc->metadata();
  EXPECT_EQ(m["dims"], json({128, 128, 128}));
  EXPECT_EQ(m["brick_size"], 32);
  EXPECT_EQ(m["lod_range"], json({0, 5}));
  EXPECT_EQ(m["label_count"], 500);
  EXPECT_EQ(m["version"], kProtocolVersion);
}

TEST(StreamServiceTest, MessageValidation) {
  auto svc = make_service(small_container());
  auto s = svc->create_session();
  EXPECT_EQ(s->handle_message(camera_msg({100, 30, 20}, {24, 20, 22}))["type"], "ack");
  EXPECT_EQ(s->handle_message({{"type", "stats_request"}})["type"], "stats");
  const json bad[] = {
      {{"type", "zoom"}},
      {{"no_type", 1}},
      {{"type", "camera"}, {"position", {1, 2}}, {"forward", {0, 0, 1}}, {"up", {0, 1, 0}}},
      {{"type", "camera"}, {"position", {0, 0, 0}}, {"forward", {0, 0, 1}}, {"up", {0, 0, 1}}},
      {{"type", "camera"}, {"position", {0, 0, 0}}, {"forward", {0, 0, 1}}, {"up", {0, 1, 0}}, {"fov", 4}},
      {{"type", "tf"}, {"default_alpha", 1.5}},
      {{"type", "tf"}, {"overrides", json::array({json{{"label", -3}}})}},
      {{"type", "tf"}, {"overrides", json::array({json{{"label", 3}, {"rgba", {1, 2, 0}}}})}},
      {{"type", "tf"}, {"overrides", {{"label", 3}}}},
      {{"type", "options"}, {"encoding", "gif"}},
      {{"type", "options"}, {"width", 0}},
      {{"type", "options"}, {"shadows", "yes"}},
      {{"type", "camera"}, {"version", 9}},
  };
  for (const auto& m : bad) {
    const json r = s->handle_message(m);
    EXPECT_EQ(r["type"], "error") << m.dump();
    EXPECT_TRUE(r["reason"].is_string());
  }
  EXPECT_EQ(s->handle_text("{not json")["type"], "error");
  // The session survives and renders.
  const auto f = s->next_frame();
  EXPECT_EQ(f.frame, 0u);
  EXPECT_EQ(f.width, 48u);
}

TEST(StreamServiceTest, CameraUpdateChangesNextFrame) {
  auto svc = make_service(small_container());
  auto s = svc->create_session();
  s->next_frame();
  s->next_frame();
  const auto settled = s->next_frame();
  const Image before = s->last_image();
  EXPECT_EQ(settled.requests, 0u);
  ASSERT_EQ(s->handle_message(camera_msg({24, 90, 60}, {24, 20, 22}))["type"], "ack");
  const auto moved = s->next_frame();
  EXPECT_FALSE(s->last_image() == before);
  EXPECT_GT(moved.requests, 0u);
  EXPECT_EQ(moved.frame, settled.frame + 1);
}

TEST(StreamServiceTest, IsolatedLabelOnlyShowsThatLabel) {
  auto c = small_container(3);
  auto svc = make_service(c);
  auto s = svc->create_session();
  s->handle_message({{"type", "options"}, {"shadows", false}});
  const json tf = {{"type", "tf"},
                   {"default_alpha", 0},
                   {"overrides", json::array({json{{"label", 7}, {"rgba", {0.2, 0.6, 1.0}}, {"alpha", 1}}})}};
  ASSERT_EQ(s->handle_message(tf)["type"], "ack");
  for (int i = 0; i < 3; ++i) s->next_frame();
  const Image img = s->last_image();
  int lit = 0;
  for (std::size_t i = 0; i < img.rgba.size(); i += 4) {
    const float a = img.rgba[i + 3];
    if (a == 0) continue;
    ++lit;
    EXPECT_NEAR(img.rgba[i], a * 0.2f, 1e-5);
    EXPECT_NEAR(img.rgba[i + 1], a * 0.6f, 1e-5);
    EXPECT_NEAR(img.rgba[i + 2], a * 1.0f, 1e-5);
  }
  EXPECT_GT(lit, 0);
  // Only bricks holding label 7 were ever decoded.
  const json st = s->stats();
  std::uint64_t with7 = 0;
  for (std::uint64_t b = 0; b < c->brick_count(); ++b) {
    const auto p = c->palette(b);
    with7 += std::find(p.begin(), p.end(), 7u) != p.end() && !c->record(b).is_constant();
  }
  EXPECT_LE(st["decode"]["bricks"].get<std::uint64_t>(), with7);
}

TEST(StreamServiceTest, HideAllStopsDecoding) {
  auto svc = make_service(small_container());
  auto s = svc->create_session();
  s->next_frame();
  ASSERT_EQ(s->handle_message({{"type", "tf"}, {"default_alpha", 0}})["type"], "ack");
  const auto f1 = s->next_frame();
  EXPECT_TRUE(background(s->last_image()));
  const auto decoded = s->stats()["decode"]["decoded_bytes"].get<std::uint64_t>();
  for (int i = 0; i < 3; ++i) {
    const auto f = s->next_frame();
    EXPECT_EQ(f.decoded_bytes, 0u);
    EXPECT_EQ(f.requests, 0u);
  }
  EXPECT_EQ(s->stats()["decode"]["decoded_bytes"].get<std::uint64_t>(), decoded);
  (void)f1;
}

TEST(StreamServiceTest, StatsMatchCodecCounters) {
  auto svc = make_service(small_container());
  auto s = svc->create_session();
  std::uint64_t sum = 0;
  for (int i = 0; i < 4; ++i) {
    s->handle_message(camera_msg({60.0 - 20 * i, 50, -30}, {24, 20, 22}));
    sum += s->next_frame().decoded_bytes;
  }
  EXPECT_GT(sum, 0u);
  EXPECT_EQ(s->stats()["decode"]["decoded_bytes"].get<std::uint64_t>(), sum);
}

TEST(StreamServiceTest, SessionsAreIsolated) {
  auto svc = make_service(small_container());
  auto a = svc->create_session();
  auto b = svc->create_session();
  EXPECT_NE(a->id(), b->id());
  b->handle_message({{"type", "tf"}, {"default_alpha", 0}});
  a->next_frame();
  b->next_frame();
  EXPECT_FALSE(background(a->last_image()));
  EXPECT_TRUE(background(b->last_image()));
  EXPECT_GT(a->stats()["decode"]["bricks"].get<std::uint64_t>(), 0u);
  EXPECT_EQ(b->stats()["decode"]["bricks"].get<std::uint64_t>(), 0u);
  EXPECT_EQ(svc->stats()["sessions"].size(), 2u);
  EXPECT_TRUE(svc->close_session(a->id()));
  EXPECT_FALSE(svc->session(a->id()));
}

TEST(StreamServiceTest, FrameMessageRoundTrip) {
  auto svc = make_service(small_container());
  auto s = svc->create_session();
  const auto f = s->next_frame();
  const auto bytes = f.serialize();
  ASSERT_EQ(bytes.size(), kFrameHeaderBytes + f.payload.size());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CSVF");
  const auto g = FrameMessage::parse(bytes);
  EXPECT_EQ(g.frame, f.frame);
  EXPECT_EQ(g.total_ms, f.total_ms);
  EXPECT_EQ(g.decoded_bytes, f.decoded_bytes);
  EXPECT_EQ(g.payload, f.payload);
  std::uint32_t w = 0, h = 0;
  EXPECT_EQ(decode_png_rgb(g.payload, &w, &h), s->last_image().to_rgb8());
  EXPECT_EQ(w, 48u);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(FrameMessage::parse(truncated), Error);

  s->handle_message({{"type", "options"}, {"encoding", "jpeg"}, {"quality", 70}, {"width", 64}});
  const auto j = s->next_frame();
  EXPECT_EQ(j.encoding, FrameEncoding::kJpeg);
  EXPECT_EQ(j.width, 64u);
  ASSERT_GT(j.payload.size(), 2u);
  EXPECT_EQ(j.payload[0], 0xFF);
  EXPECT_EQ(j.payload[1], 0xD8);
}

TEST(StreamServiceTest, HttpEndToEnd) {
  auto svc = make_service(small_container());
  httplib::Server server;
  svc->bind(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto meta = client.Get("/api/metadata");
  ASSERT_TRUE(meta);
  EXPECT_EQ(json::parse(meta->body)["dims"], json({48, 40, 44}));

  auto created = client.Post("/api/sessions", "", "application/json");
  ASSERT_TRUE(created);
  const auto id = json::parse(created->body)["id"].get<std::uint64_t>();
  const std::string base = "/api/sessions/" + std::to_string(id);

  auto ack = client.Post(base + "/messages", camera_msg({90, 40, 10}, {24, 20, 22}).dump(), "application/json");
  ASSERT_TRUE(ack);
  EXPECT_EQ(json::parse(ack->body)["type"], "ack");
  auto err = client.Post(base + "/messages", R"({"type":"warp"})", "application/json");
  EXPECT_EQ(json::parse(err->body)["type"], "error");

  auto frame = client.Get(base + "/frame");
  ASSERT_TRUE(frame);
  EXPECT_EQ(frame->status, 200);
  const auto f = FrameMessage::parse(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(frame->body.data()), frame->body.size()));
  EXPECT_EQ(f.frame, 0u);
  EXPECT_GT(f.requests, 0u);

  auto stats = client.Get("/api/stats");
  EXPECT_EQ(json::parse(stats->body)["sessions"].size(), 1u);
  EXPECT_EQ(client.Get("/api/sessions/999/frame")->status, 404);
  EXPECT_EQ(client.Delete(base)->status, 200);
  EXPECT_EQ(client.Get(base + "/frame")->status, 404);

  server.stop();
  t.join();
}
