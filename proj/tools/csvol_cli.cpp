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

// csvol: compress, inspect, benchmark, render and serve label volumes.
//
// Exit codes: 0 success, 2 bad arguments or configuration, 3 unreadable,
// unwritable or malformed input/output files, 4 corrupt compressed stream,
// 5 cache capacity exceeded, 1 anything else.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csvol/container.hpp"
#include "csvol/frame_loop.hpp"
#include "csvol/image_io.hpp"
#include "csvol/stats.hpp"
#include "csvol/stream_service.hpp"

using namespace csvol;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfiguration:
    case ErrorKind::kInputShape:
    case ErrorKind::kEncodability:
      return 2;
    case ErrorKind::kIngestion:
    case ErrorKind::kIo:
      return 3;
    case ErrorKind::kCorruptStream:
      return 4;
    case ErrorKind::kCapacity:
      return 5;
  }
  return 1;
}

/// Ordered key/value report printed either as aligned text or key=value.
class Report {
 public:
  template <class T>
  void add(const std::string& key, const T& value) {
    std::ostringstream o;
    o << std::setprecision(9) << value;
    rows_.emplace_back(key, o.str());
  }
  void print(bool kv) const {
    for (const auto& [k, v] : rows_) {
      if (kv) {
        std::cout << k << '=' << v << '\n';
      } else {
        std::cout << std::left << std::setw(28) << k << v << '\n';
      }
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

struct InputVolume {
  std::string path;
  std::vector<std::uint32_t> dims;
  int width = 0;

  RawMeta meta() const {
    RawMeta m;
    if (dims.empty()) {
      m = read_sidecar(default_sidecar_path(path));
      if (width != 0) m.label_width = width;
    } else {
      m.dims = {dims[0], dims[1], dims[2]};
      m.label_width = width == 0 ? 32 : width;
    }
    return m;
  }
};

void add_input_options(CLI::App* app, InputVolume& in) {
  app->add_option("input", in.path, "raw label volume (little-endian, x-fastest)")->required();
  app->add_option("--dims", in.dims, "volume dimensions X Y Z; default: read <input>.meta")->expected(3);
  app->add_option("--label-width", in.width, "bits per label on disk, 16 or 32")
      ->check(CLI::IsMember({16, 32}));
}

struct CompressArgs {
  InputVolume in;
  std::string output;
  int brick = 32;
  unsigned workers = 1;
  std::uint32_t stride = kDefaultPrepassStride;
  bool no_entropy = false;
  bool out_of_core = false;
};

void add_codec_options(CLI::App* app, int& brick, unsigned& workers) {
  app->add_option("-b,--brick", brick, "brick side b")->check(CLI::IsMember({2, 4, 8, 16, 32, 64, 128}))
      ->capture_default_str();
  app->add_option("-j,--workers", workers, "worker threads")->check(CLI::Range(1U, 1024U))->capture_default_str();
}

int cmd_compress(const CompressArgs& a, bool kv) {
  const RawMeta meta = a.in.meta();
  CompressOptions opts;
  opts.config = BrickConfig::from_side(a.brick);
  opts.workers = a.workers;
  opts.prepass_stride = a.stride;
  opts.entropy = !a.no_entropy;
  Container c;
  double secs = 0;
  if (a.out_of_core) {
    const RawFileSource src(a.in.path, meta);
    const auto t = Clock::now();
    c = compress_volume(src, opts);
    secs = seconds_since(t);
  } else {
    const Volume v = load_raw(a.in.path, meta);
    const auto t = Clock::now();
    c = compress_volume(v, opts);
    secs = seconds_since(t);
  }
  c.save(a.output);
  Report r;
  r.add("input", a.in.path);
  r.add("output", a.output);
  r.add("dims", to_string(meta.dims));
  r.add("brick", a.brick);
  r.add("entropy", opts.entropy ? "on" : "off");
  r.add("workers", a.workers);
  r.add("original_bytes", c.meta().original_bytes());
  r.add("compressed_bytes", c.serialized_size());
  r.add("cr", c.compression_rate());
  r.add("seconds", secs);
  r.add("gb_per_s", double(c.meta().original_bytes()) / secs / 1e9);
  r.add("timing", a.out_of_core ? "includes slab reads" : "excludes file IO");
  r.print(kv);
  return 0;
}

int cmd_decompress(const std::string& input, const std::string& output, int lod, unsigned workers, bool kv) {
  const Container c = Container::load(input);
  DecodeCounters counters;
  const auto t = Clock::now();
  const Volume v = decompress_volume(c, lod, workers, &counters);
  const double secs = seconds_since(t);
  save_raw(v, output);
  Report r;
  r.add("input", input);
  r.add("output", output);
  r.add("lod", lod);
  r.add("dims", to_string(v.dims));
  r.add("workers", workers);
  r.add("bricks_decoded", counters.bricks.load());
  r.add("decoded_bytes", counters.decoded_bytes());
  r.add("seconds", secs);
  r.add("gb_per_s", double(v.original_bytes()) / secs / 1e9);
  r.print(kv);
  return 0;
}

int cmd_info(const std::string& input, bool kv) {
  const Container c = Container::load(input);
  const auto& m = c.meta();
  const StatsReport s = compute_stats(c);
  Report r;
  r.add("file", input);
  r.add("dims", to_string(m.dims));
  r.add("label_width", m.label_width);
  r.add("brick", m.config.side());
  r.add("levels", m.config.level_count());
  r.add("brick_grid", to_string(m.brick_grid));
  r.add("entropy", c.entropy_coded() ? "on" : "off");
  r.add("prepass_stride", c.prepass_stride());
  r.add("file_bytes", c.serialized_size());
  r.add("palette_labels", c.palette_blob_labels());
  r.add("coarse_blob_bytes", c.coarse_blob_bytes());
  r.add("detail_blob_bytes", c.detail_blob_bytes());
  r.add("detail_section_offset", c.detail_section_offset());
  r.add("homogeneous_fraction", s.bricks ? double(s.homogeneous_bricks) / double(s.bricks) : 0.0);
  r.print(kv);
  std::cout << (kv ? stats_to_kv(s) : "\n" + stats_to_text(s));
  return 0;
}

struct BenchArgs {
  InputVolume in;
  std::vector<std::uint32_t> synth_dims;
  std::uint32_t regions = 500;
  std::uint64_t seed = 1;
  int brick = 64;
  unsigned workers = 0;
  int repeat = 1;
};

int cmd_bench(const BenchArgs& a, bool kv) {
  Volume v;
  std::string source;
  if (!a.synth_dims.empty()) {
    v = gen_synthetic(a.seed, {a.synth_dims[0], a.synth_dims[1], a.synth_dims[2]}, a.regions);
    source = "synthetic seed=" + std::to_string(a.seed) + " regions=" + std::to_string(a.regions);
  } else if (!a.in.path.empty()) {
    v = load_raw(a.in.path, a.in.meta());
    source = a.in.path;
  } else {
    throw Error(ErrorKind::kConfiguration, "bench needs an input volume or --synth");
  }
  const unsigned many = a.workers == 0 ? default_worker_count() : a.workers;
  const double raw = double(v.original_bytes());

  auto time_compress = [&](bool entropy, unsigned workers, Container* out) {
    CompressOptions o;
    o.config = BrickConfig::from_side(a.brick);
    o.entropy = entropy;
    o.workers = workers;
    double best = 1e300;
    for (int i = 0; i < a.repeat; ++i) {
      const auto t = Clock::now();
      *out = compress_volume(v, o);
      best = std::min(best, seconds_since(t));
    }
    return best;
  };
  auto time_decode = [&](const Container& c, unsigned workers) {
    double best = 1e300;
    for (int i = 0; i < a.repeat; ++i) {
      const auto t = Clock::now();
      const Volume back = decompress_volume(c, 0, workers);
      best = std::min(best, seconds_since(t));
      if (i == 0 && !(back == v)) throw Error(ErrorKind::kCorruptStream, "bench round trip is not lossless");
    }
    return best;
  };

  Container with, without, tmp;
  const double c1 = time_compress(true, 1, &with);
  const double cn = time_compress(true, many, &tmp);
  const double craw = time_compress(false, 1, &without);
  const double d1 = time_decode(with, 1);
  const double dn = time_decode(with, many);
  const std::uint64_t baseline = palette_baseline_size(v);
  const StatsReport s = compute_stats(with);

  if (kv) {
    Report r;
    r.add("source", source);
    r.add("dims", to_string(v.dims));
    r.add("brick", a.brick);
    r.add("original_bytes", v.original_bytes());
    r.add("csv_rans_bytes", with.serialized_size());
    r.add("csv_rans_cr", with.compression_rate());
    r.add("csv_raw_bytes", without.serialized_size());
    r.add("csv_raw_cr", without.compression_rate());
    r.add("palette_baseline_bytes", baseline);
    r.add("palette_baseline_cr", double(baseline) / raw);
    r.add("compress_gbps_1", raw / c1 / 1e9);
    r.add("compress_gbps_n", raw / cn / 1e9);
    r.add("compress_raw_gbps_1", raw / craw / 1e9);
    r.add("decode_gbps_1", raw / d1 / 1e9);
    r.add("decode_gbps_n", raw / dn / 1e9);
    r.add("workers_n", many);
    r.add("reference_compress_gbps", "1.5-3");
    r.add("reference_decode_gbps", "10");
    r.print(true);
    for (int op = 0; op < kOpCodeCount; ++op) {
      std::cout << "op." << op_name(static_cast<OpCode>(op)) << '=' << s.op_frequency(static_cast<OpCode>(op))
                << '\n';
    }
    return 0;
  }
  std::cout << "# " << source << ", dims " << to_string(v.dims) << ", b=" << a.brick << '\n';
  std::cout << "method,bytes,compression_rate\n" << std::setprecision(6);
  std::cout << "csv_rans," << with.serialized_size() << ',' << with.compression_rate() << '\n';
  std::cout << "csv_raw_nibbles," << without.serialized_size() << ',' << without.compression_rate() << '\n';
  std::cout << "palette_baseline," << baseline << ',' << double(baseline) / raw << '\n';
  std::cout << "\nphase,workers,seconds,gb_per_s,reference_gb_per_s\n";
  std::cout << "compress," << 1 << ',' << c1 << ',' << raw / c1 / 1e9 << ",1.5-3\n";
  std::cout << "compress," << many << ',' << cn << ',' << raw / cn / 1e9 << ",1.5-3\n";
  std::cout << "decode," << 1 << ',' << d1 << ',' << raw / d1 / 1e9 << ",10\n";
  std::cout << "decode," << many << ',' << dn << ',' << raw / dn / 1e9 << ",10\n";
  std::cout << "\n# reference figures come from a published GPU implementation; IO excluded on both sides\n";
  std::cout << "\noperation,frequency\n";
  for (int op = 0; op < kOpCodeCount; ++op) {
    std::cout << op_name(static_cast<OpCode>(op)) << ',' << s.op_frequency(static_cast<OpCode>(op)) << '\n';
  }
  return 0;
}

struct RenderArgs {
  std::string input;
  std::string path;
  std::string out_dir = ".";
  std::string log;
  std::vector<std::uint32_t> size = {512, 512};
  double fov = 0.8;
  std::uint64_t budget = kDefaultDetailBudget;
  std::uint64_t pool = kDefaultPoolElements;
  bool no_shadows = false;
  bool no_skip = false;
  int lod = -1;
  std::string encoding = "png";
  unsigned workers = 1;
  float default_alpha = 1.0f;
};

int cmd_render(const RenderArgs& a, bool kv) {
  auto c = std::make_shared<const Container>(Container::load(a.input, false));
  auto store = std::make_shared<FileDetailStore>(a.input, c);
  FrameLoopOptions fo;
  fo.render.shadows = !a.no_shadows;
  fo.render.skip_empty = !a.no_skip;
  fo.render.forced_lod = a.lod;
  fo.render.workers = a.workers;
  fo.decode_workers = a.workers;
  fo.detail_budget = a.budget;
  fo.pool_elements = a.pool;
  FrameLoop loop(c, store, fo);
  TransferFunction tf;
  tf.default_alpha = a.default_alpha;
  const auto cams = expand_camera_path(load_camera_path(a.path), a.fov, a.size[0], a.size[1]);
  std::filesystem::create_directories(a.out_dir);
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw Error(ErrorKind::kIo, "cannot write " + a.log);
  }
  for (const auto& cam : cams) {
    const auto [img, rep] = loop.step(cam, tf);
    std::ostringstream name;
    name << "frame_" << std::setw(4) << std::setfill('0') << rep.frame << (a.encoding == "png" ? ".png" : ".jpg");
    write_file((std::filesystem::path(a.out_dir) / name.str()).string(),
               a.encoding == "png" ? encode_png(img) : encode_jpeg(img, 90));
    const std::string line = frame_report_kv(rep);
    if (log.is_open()) log << line << '\n';
    if (kv) {
      std::cout << line << '\n';
    } else {
      std::cout << std::fixed << std::setprecision(2) << "frame " << rep.frame << ": raymarch "
                << rep.timings.raymarch_ms << " ms, decompress " << rep.timings.decompress_ms << " ms, assign "
                << rep.timings.assign_ms << " ms, " << rep.requests.size() << " requests, "
                << rep.placements << " placed\n";
    }
  }
  return 0;
}

struct ServeArgs {
  std::string input;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  std::vector<std::uint32_t> size = {512, 512};
  std::uint64_t budget = kDefaultDetailBudget;
  std::uint64_t pool = kDefaultPoolElements;
  unsigned workers = 1;
};

int cmd_serve(const ServeArgs& a) {
  ServiceOptions opt;
  opt.width = a.size[0];
  opt.height = a.size[1];
  opt.detail_budget = a.budget;
  opt.pool_elements = a.pool;
  opt.workers = a.workers;
  auto svc = StreamService::from_file(a.input, opt);
  httplib::Server server;
  svc->bind(server);
  if (!a.static_dir.empty() && !server.set_mount_point("/", a.static_dir)) {
    throw Error(ErrorKind::kConfiguration, "static directory " + a.static_dir + " does not exist");
  }
  int port = a.port;
  if (port == 0) {
    port = server.bind_to_any_port(a.host);
  } else if (!server.bind_to_port(a.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorKind::kIo, "cannot bind " + a.host + ":" + std::to_string(a.port));
  std::cout << "serving " << a.input << " on http://" << a.host << ':' << port << "/api/metadata" << std::endl;
  server.listen_after_bind();
  return 0;
}

struct SynthArgs {
  std::string output;
  std::vector<std::uint32_t> dims = {128, 128, 128};
  std::uint32_t regions = 500;
  std::uint64_t seed = 1;
  int width = 32;
};

int cmd_synth(const SynthArgs& a, bool kv) {
  Volume v = gen_synthetic(a.seed, {a.dims[0], a.dims[1], a.dims[2]}, a.regions);
  v.label_width = a.width;
  save_raw(v, a.output);
  Report r;
  r.add("output", a.output);
  r.add("sidecar", default_sidecar_path(a.output));
  r.add("dims", to_string(v.dims));
  r.add("regions", a.regions);
  r.add("seed", a.seed);
  r.add("label_width", a.width);
  r.add("bytes", v.original_bytes());
  r.print(kv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"csvol: lossless compression and streamed rendering of segmentation volumes"};
  app.require_subcommand(1);
  std::string format = "text";
  app.add_option("--format", format, "report format")->check(CLI::IsMember({"text", "kv"}))->capture_default_str();

  CompressArgs ca;
  auto* compress = app.add_subcommand("compress", "compress a raw label volume");
  add_input_options(compress, ca.in);
  compress->add_option("-o,--output", ca.output, "container file (.csv1)")->required();
  add_codec_options(compress, ca.brick, ca.workers);
  compress->add_option("--prepass-stride", ca.stride, "sample every n-th brick for the frequency tables")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  compress->add_flag("--no-entropy", ca.no_entropy, "store nibbles without rANS coding");
  compress->add_flag("--out-of-core", ca.out_of_core, "stream the input slab by slab instead of loading it");

  std::string d_in, d_out;
  int d_lod = 0;
  unsigned d_workers = 1;
  auto* decompress = app.add_subcommand("decompress", "decompress a container to a raw volume");
  decompress->add_option("input", d_in, "container file")->required();
  decompress->add_option("-o,--output", d_out, "raw output; a .meta sidecar is written next to it")->required();
  decompress->add_option("-t,--lod", d_lod, "level of detail, 0 = full resolution")->capture_default_str();
  decompress->add_option("-j,--workers", d_workers, "worker threads")->check(CLI::Range(1U, 1024U));

  std::string i_in;
  auto* info = app.add_subcommand("info", "print header, directory summary and statistics");
  info->add_option("input", i_in, "container file")->required();
  auto* stats = app.add_subcommand("stats", "alias of info");
  stats->add_option("input", i_in, "container file")->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "compare against paletting and report throughput");
  bench->add_option("input", ba.in.path, "raw label volume");
  bench->add_option("--dims", ba.in.dims, "volume dimensions X Y Z")->expected(3);
  bench->add_option("--label-width", ba.in.width, "bits per label on disk")->check(CLI::IsMember({16, 32}));
  bench->add_option("--synth", ba.synth_dims, "benchmark a synthetic volume of these dims")->expected(3);
  bench->add_option("--regions", ba.regions, "regions of the synthetic volume")->capture_default_str();
  bench->add_option("--seed", ba.seed, "seed of the synthetic volume")->capture_default_str();
  bench->add_option("-b,--brick", ba.brick, "brick side b")->check(CLI::IsMember({2, 4, 8, 16, 32, 64, 128}))
      ->capture_default_str();
  bench->add_option("-j,--workers", ba.workers, "threads for the multi-worker runs, 0 = all cores");
  bench->add_option("--repeat", ba.repeat, "timed repetitions, best kept")->check(CLI::Range(1, 100));

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "run the frame loop offline along a camera path");
  render->add_option("input", ra.input, "container file")->required();
  render->add_option("--path", ra.path, "camera path: lines of 'frame px py pz fx fy fz ux uy uz'")->required();
  render->add_option("--out-dir", ra.out_dir, "directory for frame images")->capture_default_str();
  render->add_option("--log", ra.log, "timing log, one key=value line per frame");
  render->add_option("--size", ra.size, "image width and height")->expected(2);
  render->add_option("--fov", ra.fov, "vertical field of view in radians")->capture_default_str();
  render->add_option("--budget", ra.budget, "detail bytes transferred per frame")->capture_default_str();
  render->add_option("--pool", ra.pool, "cache pool size in base elements of 8 labels")->capture_default_str();
  render->add_option("--lod", ra.lod, "force every brick to this level");
  render->add_option("--alpha", ra.default_alpha, "opacity of every label")->check(CLI::Range(0.0, 1.0));
  render->add_option("--encoding", ra.encoding, "frame image format")->check(CLI::IsMember({"png", "jpeg"}));
  render->add_option("-j,--workers", ra.workers, "render and decode threads")->check(CLI::Range(1U, 1024U));
  render->add_flag("--no-shadows", ra.no_shadows, "disable shadow rays");
  render->add_flag("--no-skip", ra.no_skip, "disable empty-space skipping");

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "serve a container to interactive clients over HTTP");
  serve->add_option("input", sa.input, "container file")->required();
  serve->add_option("--host", sa.host, "bind address")->capture_default_str();
  serve->add_option("--port", sa.port, "port, 0 = any free port")->capture_default_str();
  serve->add_option("--static", sa.static_dir, "directory of client assets served at /");
  serve->add_option("--size", sa.size, "default image width and height")->expected(2);
  serve->add_option("--budget", sa.budget, "detail bytes transferred per frame")->capture_default_str();
  serve->add_option("--pool", sa.pool, "cache pool size per session in base elements")->capture_default_str();
  serve->add_option("-j,--workers", sa.workers, "render and decode threads per session");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic label volume");
  synth->add_option("-o,--output", ya.output, "raw output; a .meta sidecar is written next to it")->required();
  synth->add_option("--dims", ya.dims, "dimensions X Y Z")->expected(3);
  synth->add_option("--regions", ya.regions, "number of regions")->capture_default_str();
  synth->add_option("--seed", ya.seed, "random seed")->capture_default_str();
  synth->add_option("--label-width", ya.width, "bits per label on disk")->check(CLI::IsMember({16, 32}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const bool kv = format == "kv";
  try {
    if (*compress) return cmd_compress(ca, kv);
    if (*decompress) return cmd_decompress(d_in, d_out, d_lod, d_workers, kv);
    if (*info || *stats) return cmd_info(i_in, kv);
    if (*bench) return cmd_bench(ba, kv);
    if (*render) return cmd_render(ra, kv);
    if (*serve) return cmd_serve(sa);
    if (*synth) return cmd_synth(ya, kv);
  } catch (const Error& e) {
    std::cerr << "csvol: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "csvol: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
