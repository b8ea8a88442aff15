#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "stformer/core/error.hpp"
#include "stformer/model/checkpoint.hpp"
#include "stformer/model/network.hpp"
#include "stformer/pipeline/commands.hpp"
#include "stformer/pipeline/dataset.hpp"
#include "stformer/pipeline/trainer.hpp"

using namespace stf;
using namespace stf::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("stf_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Tiny model used by the command and trainer tests: 8x8 tokens of 8 channels.
TrainConfig tiny_config() {
  TrainConfig c = toy_train_config();
  c.model_overrides = {{"channels", 8}, {"blocks_per_stage", {2}}, {"heads", 2},
                       {"window_h", 4}, {"window_w", 4},          {"frames", 4}};
  c.stages = {{16, 2, 1e-3}};
  c.steps_per_epoch = 2;
  return c;
}

}  // namespace

TEST_CASE("PNM round trip, 8 and 16 bit") {
  TempDir dir("pnm");
  NdArray<double> gray({3, 5, 1}), rgb({2, 4, 3});
  for (std::size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = double(i * 17 % 256) / 255.0;
  for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = double(i * 11 % 256) / 255.0;
  write_pnm(dir / "g.pgm", gray);
  write_pnm(dir / "c.ppm", rgb);
  CHECK(read_pnm(dir / "g.pgm").data == gray.data);
  CHECK(read_pnm(dir / "c.ppm").data == rgb.data);
  CHECK(read_pnm(dir / "c.ppm").dims == Shape{2, 4, 3});

  {
    std::ofstream os(dir / "w.pgm", std::ios::binary);
    os << "P5\n# comment\n2 1\n65535\n";
    const unsigned char px[] = {0xff, 0xff, 0x80, 0x00};
    os.write(reinterpret_cast<const char*>(px), 4);
  }
  const auto wide = read_pnm(dir / "w.pgm");
  CHECK(wide.data[0] == 1.0);
  CHECK(wide.data[1] == doctest::Approx(32768.0 / 65535.0));

  {
    std::ofstream os(dir / "bad.pgm", std::ios::binary);
    os << "P5\n4 4\n255\nab";
  }
  CHECK_THROWS_AS(read_pnm(dir / "bad.pgm"), IoError);
  CHECK_THROWS_AS(read_pnm(dir / "missing.pgm"), IoError);
}

TEST_CASE("load_video reads PNM frame directories and STF1 cubes") {
  TempDir dir("video");
  fs::create_directories(dir / "frames");
  const auto clip = synthetic_video<double>(6, 4, 1, 3, 5);
  for (std::size_t f = 0; f < 3; ++f) {
    NdArray<double> img({6, 4, 1});
    for (std::size_t i = 0; i < 24; ++i) img.data[i] = std::round(clip.frames.data[i * 3 + f] * 255) / 255;
    write_pnm(dir / ("frames/f" + std::to_string(f) + ".pgm"), img);
  }
  const auto v = load_video<double>(dir / "frames");
  REQUIRE(v.frames.dims == Shape{6, 4, 1, 3});
  for (std::size_t i = 0; i < v.frames.data.size(); ++i) {
    CHECK(std::abs(v.frames.data[i] - clip.frames.data[i]) <= 0.5 / 255 + 1e-12);
  }

  NdArray<std::uint8_t> u8({2, 2, 1, 2});
  u8.data = {0, 255, 51, 102, 0, 0, 255, 255};
  save_stf1(dir / "u8.stf1", u8);
  CHECK(load_video<float>(dir / "u8.stf1").frames.data[1] == 1.0f);
  CHECK(load_video<float>(dir / "u8.stf1").frames.data[2] == doctest::Approx(0.2));

  save_stf1(dir / "flat.stf1", NdArray<float>({2, 2}));
  CHECK_THROWS_AS(load_video<float>(dir / "flat.stf1"), ShapeError);
  CHECK_THROWS_AS(load_clips<float>(dir / "nowhere"), IoError);
}

TEST_CASE("synthetic_video is deterministic and bounded") {
  const auto a = synthetic_video<double>(16, 12, 3, 5, 9);
  const auto b = synthetic_video<double>(16, 12, 3, 5, 9);
  const auto c = synthetic_video<double>(16, 12, 3, 5, 10);
  CHECK(a.frames.data == b.frames.data);
  CHECK(a.frames.data != c.frames.data);
  for (double v : a.frames.data) {
    CHECK(v >= 0.15);
    CHECK(v <= 0.95);
  }
}

TEST_CASE("frame_range and sample_clip geometry") {
  const auto clip = synthetic_video<double>(20, 24, 1, 10, 1);
  const auto part = frame_range(clip, 3, 4);
  CHECK(part.frames.dims == Shape{20, 24, 1, 4});
  CHECK(part.at(5, 7, 0, 2) == clip.at(5, 7, 0, 5));
  CHECK_THROWS_AS(frame_range(clip, 8, 4), ShapeError);

  std::mt19937_64 rng(3);
  const Augment none{false, false, false, 1, 1};
  const auto same = synthetic_video<double>(16, 16, 1, 4, 2);
  CHECK(sample_clip(same, 16, 4, none, rng).frames.data == same.frames.data);

  // Centre crop without resampling.
  const auto centre = sample_clip(clip, 8, 4, none, rng);
  CHECK(centre.at(0, 0, 0, 0) == clip.at(6, 8, 0, 0));

  Augment flip = none;
  flip.hflip = true;
  bool mirrored = false;
  for (int i = 0; i < 8 && !mirrored; ++i) {
    const auto s = sample_clip(same, 16, 4, flip, rng);
    mirrored = s.at(2, 0, 0, 1) == same.at(2, 15, 0, 1) && s.frames.data != same.frames.data;
  }
  CHECK(mirrored);

  const Augment all{true, true, true, 0.8, 1.2};
  for (int i = 0; i < 10; ++i) {
    const auto s = sample_clip(clip, 12, 4, all, rng);
    CHECK(s.frames.dims == Shape{12, 12, 1, 4});
    for (double v : s.frames.data) CHECK((v >= 0.15 && v <= 0.95));
  }
  CHECK_THROWS_AS(sample_clip(clip, 8, 11, none, rng), ShapeError);
}

TEST_CASE("make_batch stacks simulated inputs and targets") {
  const auto c = tiny_config().model();
  const auto m = sci::gen_masks(16, 16, 4, 1);
  std::vector<sci::VideoCube<float>> truths{synthetic_video<float>(16, 16, 1, 4, 1),
                                            synthetic_video<float>(16, 16, 1, 4, 2)};
  const auto b = make_batch(truths, m, c, 0.0, 0);
  CHECK(b.input.dims() == Shape{2, 4, 16, 16, 1});
  CHECK(b.target.dims() == Shape{2, 4, 16, 16, 1});
  const auto single = make_batch<float>({truths[1]}, m, c, 0.0, 0);
  const auto second = b.input.values().subspan(single.input.numel());
  CHECK(std::equal(second.begin(), second.end(), single.input.values().begin()));

  auto color = c;
  color.in_channels = 4;
  color.out_channels = 3;
  const auto rgb = make_batch<float>({synthetic_video<float>(16, 16, 3, 4, 1)}, m, color, 0.0, 0);
  CHECK(rgb.input.dims() == Shape{1, 4, 8, 8, 4});
  CHECK(rgb.target.dims() == Shape{1, 4, 16, 16, 3});
  CHECK_THROWS_AS(make_batch(truths, m, color, 0.0, 0), ShapeError);
}

TEST_CASE("TrainConfig JSON round trip and validation") {
  TrainConfig c = tiny_config();
  c.dataset = "clips";
  c.noise_sigma = 0.01;
  c.init_checkpoint = "w.stfc";
  const nlohmann::json j = c;
  CHECK(j.get<TrainConfig>() == c);
  CHECK(nlohmann::json::parse(j.dump()).get<TrainConfig>().hash() == c.hash());

  const TrainConfig defaults = nlohmann::json::object().get<TrainConfig>();
  CHECK(defaults.stages.size() == 2);
  CHECK(defaults.stages[0] == Stage{128, 100, 1e-4});
  CHECK(defaults.stages[1] == Stage{256, 20, 1e-5});
  CHECK(defaults.model() == model::ModelConfig::preset("S"));

  auto bad = [&](nlohmann::json patch) {
    nlohmann::json k = j;
    k.merge_patch(patch);
    return k;
  };
  CHECK_THROWS_AS(bad({{"learning_rate", 1}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"augment", {{"rotate", true}}}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"model", {{"depth", 3}}}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"stages", {{{"spatial", 16}, {"epochs", 1}, {"lr", 0}}}}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"stages", {{{"spatial", 32}}, {{"spatial", 16}}}}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"stages", {{{"spatial", 15}}}}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"batch", 0}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"preset", "XL"}}).get<TrainConfig>(), ConfigError);
  CHECK_THROWS_AS(bad({{"seed", "one"}}).get<TrainConfig>(), ConfigError);
  CHECK_NOTHROW(bad({{"stages", {{{"spatial", 16}, {"epochs", 0}}}}}).get<TrainConfig>());

  nlohmann::json custom = {{"preset", "custom"}};
  CHECK_THROWS_AS(custom.get<TrainConfig>(), ConfigError);
}

TEST_CASE("train: zero epochs keep the initial weights") {
  TempDir dir("train0");
  TrainConfig c = tiny_config();
  c.stages = {{16, 0, 1e-3}};
  auto p = model::build_model<float>(c.model(), 4);
  const auto before = model::build_model<float>(c.model(), 4);
  const auto m = train(c, {synthetic_video<float>(16, 16, 1, 4, 1)}, p, {dir.path, nullptr});
  CHECK(m.steps == 0);
  CHECK(m.loss_curve.empty());
  const auto saved = model::load_checkpoint<float>(dir / kCheckpointFile);
  const auto a = saved.named(), b = before.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    const auto x = a[i].second.values(), y = b[i].second.values();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}

TEST_CASE("train: same seed reproduces loss curve, manifest and checkpoint") {
  TempDir d1("trainA"), d2("trainB");
  TrainConfig c = tiny_config();
  c.random_masks = true;
  c.augment = Augment{};
  c.batch = 2;
  c.noise_sigma = 0.01;
  std::vector<sci::VideoCube<float>> clips{synthetic_video<float>(20, 20, 1, 6, 1),
                                           synthetic_video<float>(20, 20, 1, 6, 2),
                                           synthetic_video<float>(20, 20, 1, 6, 3)};
  auto p1 = model::build_model<float>(c.model(), c.seed);
  auto p2 = model::build_model<float>(c.model(), c.seed);
  std::ostringstream log;
  const auto m1 = train(c, clips, p1, {d1.path, &log});
  const auto m2 = train(c, clips, p2, {d2.path, nullptr});
  CHECK(m1.loss_curve.size() == 2);
  CHECK(m1.steps == 4);
  CHECK(m1.loss_curve == m2.loss_curve);
  for (double l : m1.loss_curve) CHECK(std::isfinite(l));
  CHECK(slurp(d1 / kManifestFile) == slurp(d2 / kManifestFile));
  CHECK(slurp(d1 / kCheckpointFile) == slurp(d2 / kCheckpointFile));
  const std::string lines = log.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);

  const auto back = nlohmann::json::parse(slurp(d1 / kManifestFile)).get<RunManifest>();
  CHECK(back.config_hash == c.hash());
  CHECK(back.loss_curve == m1.loss_curve);
  CHECK(back.final_report == m1.final_report);
  CHECK(back.checkpoint == kCheckpointFile);

  TrainConfig other = c;
  other.seed = c.seed + 1;
  auto p3 = model::build_model<float>(c.model(), c.seed);
  CHECK(train(other, clips, p3).loss_curve != m1.loss_curve);
}

TEST_CASE("train: loss decreases on a single clip") {
  TrainConfig c = tiny_config();
  c.stages = {{16, 4, 3e-3}};
  c.steps_per_epoch = 10;
  auto p = model::build_model<double>(c.model(), 2);
  const auto m = train(c, {synthetic_video<double>(16, 16, 1, 4, 1)}, p);
  CHECK(m.loss_curve.back() < 0.5 * m.loss_curve.front());
}

TEST_CASE("train: errors") {
  TrainConfig c = tiny_config();
  auto p = model::build_model<float>(c.model(), 1);
  CHECK_THROWS_AS(train<float>(c, {}, p), IoError);
  CHECK_THROWS_AS(train(c, {synthetic_video<float>(16, 16, 3, 4, 1)}, p), ConfigError);
  CHECK_THROWS_AS(train(c, {synthetic_video<float>(16, 16, 1, 3, 1)}, p), ShapeError);
  auto other = model::build_model<float>(model::ModelConfig::preset("S"), 1);
  CHECK_THROWS_AS(train(c, {synthetic_video<float>(16, 16, 1, 4, 1)}, other), ConfigError);

  auto nan_clip = synthetic_video<float>(16, 16, 1, 4, 1);
  nan_clip.frames.data[5] = std::nanf("");
  CHECK_THROWS_AS(train(c, {nan_clip}, p), NonFiniteError);

  c.dataset = "/nonexistent/clips";
  CHECK_THROWS_AS(cmd_train(c, DType::f32, "/tmp/unused", nullptr), IoError);
}

TEST_CASE("cmd_mask writes a reproducible u8 cube") {
  TempDir dir("mask");
  const auto s1 = cmd_mask(10, 12, 8, 5, dir / "a.stf1");
  const auto s2 = cmd_mask(10, 12, 8, 5, dir / "b.stf1");
  const auto s3 = cmd_mask(10, 12, 8, 6, dir / "c.stf1");
  CHECK(s1["fnv1a64"] == s2["fnv1a64"]);
  CHECK(s1["fnv1a64"] != s3["fnv1a64"]);
  const auto back = load_stf1_as<std::uint8_t>(dir / "a.stf1");
  CHECK(back.dims == Shape{10, 12, 8});
  CHECK(back.data == sci::gen_masks(10, 12, 8, 5).values.data);
}

TEST_CASE("cmd_encode: one measurement per B frames") {
  TempDir dir("encode");
  cmd_mask(8, 8, 8, 1, dir / "m.stf1");
  save_stf1(dir / "v32.stf1", synthetic_video<double>(8, 8, 1, 32, 1).frames);
  save_stf1(dir / "v8.stf1", synthetic_video<double>(8, 8, 1, 8, 1).frames);
  save_stf1(dir / "v12.stf1", synthetic_video<double>(8, 8, 1, 12, 1).frames);
  save_stf1(dir / "rgb.stf1", synthetic_video<double>(8, 8, 3, 16, 1).frames);
  EncodeOptions opt;
  opt.dtype = DType::f64;
  CHECK(cmd_encode(dir / "v32.stf1", dir / "m.stf1", opt, dir / "y32.stf1")["measurements"] == 4);
  CHECK(cmd_encode(dir / "v8.stf1", dir / "m.stf1", opt, dir / "y8.stf1")["measurements"] == 1);
  CHECK_THROWS_AS(cmd_encode(dir / "v12.stf1", dir / "m.stf1", opt, dir / "y12.stf1"), ShapeError);
  CHECK_THROWS_AS(cmd_encode(dir / "rgb.stf1", dir / "m.stf1", opt, dir / "bad.stf1"), ShapeError);

  // Third measurement equals direct simulation of frames 16..23.
  const auto y = load_stf1_as<double>(dir / "y32.stf1");
  REQUIRE(y.dims == Shape{8, 8, 4});
  const auto direct = simulate(frame_range(synthetic_video<double>(8, 8, 1, 32, 1), 16, 8),
                               sci::gen_masks(8, 8, 8, 1), 0.0, 0);
  for (std::size_t i = 0; i < 64; ++i) CHECK(y.data[i * 4 + 2] == direct.values.data[i]);

  cmd_encode(dir / "v32.stf1", dir / "m.stf1", opt, dir / "again.stf1");
  CHECK(slurp(dir / "y32.stf1") == slurp(dir / "again.stf1"));

  opt.color = true;
  cmd_encode(dir / "rgb.stf1", dir / "m.stf1", opt, dir / "yc.stf1");
  const auto yc = load_stf1_as<double>(dir / "yc.stf1");
  const auto rgb = frame_range(synthetic_video<double>(8, 8, 3, 16, 1), 8, 8);
  const auto ref = sci::integrate(sci::modulate(sci::bayer_mosaic(rgb), sci::gen_masks(8, 8, 8, 1)));
  for (std::size_t i = 0; i < 64; ++i) CHECK(yc.data[i * 2 + 1] == ref.values.data[i]);

  opt.color = false;
  opt.sigma = 0.05;
  opt.seed = 3;
  cmd_encode(dir / "v8.stf1", dir / "m.stf1", opt, dir / "n1.stf1");
  cmd_encode(dir / "v8.stf1", dir / "m.stf1", opt, dir / "n2.stf1");
  CHECK(slurp(dir / "n1.stf1") == slurp(dir / "n2.stf1"));
  CHECK(slurp(dir / "n1.stf1") != slurp(dir / "y8.stf1"));
}

TEST_CASE("mask, encode, reconstruct, eval end to end") {
  TempDir dir("e2e");
  TrainConfig c = tiny_config();
  cmd_mask(16, 16, 4, 2, dir / "m.stf1");
  save_stf1(dir / "v.stf1", synthetic_video<float>(16, 16, 1, 8, 1).frames);
  cmd_encode(dir / "v.stf1", dir / "m.stf1", {}, dir / "y.stf1");
  cmd_init(c, 3, DType::f32, dir / "w.stfc");
  const auto r = cmd_reconstruct(dir / "y.stf1", dir / "m.stf1", dir / "w.stfc", DType::f32, dir / "r.stf1");
  CHECK(r["dims"] == nlohmann::json{16, 16, 1, 8});
  cmd_reconstruct(dir / "y.stf1", dir / "m.stf1", dir / "w.stfc", DType::f32, dir / "r2.stf1");
  CHECK(slurp(dir / "r.stf1") == slurp(dir / "r2.stf1"));

  // Second half of the output is the reconstruction of the second measurement.
  const auto w = model::load_checkpoint<float>(dir / "w.stfc");
  const auto ys = load_stf1_as<float>(dir / "y.stf1");
  sci::Measurement<float> y1;
  y1.values = NdArray<float>({16, 16});
  for (std::size_t i = 0; i < 256; ++i) y1.values.data[i] = ys.data[i * 2 + 1];
  const auto x1 = model::stformer_forward(y1, sci::MaskCube(load_stf1_as<std::uint8_t>(dir / "m.stf1")), w);
  const auto out = load_stf1_as<float>(dir / "r.stf1");
  for (std::size_t i = 0; i < 256; ++i)
    for (std::size_t f = 0; f < 4; ++f) CHECK(out.data[i * 8 + 4 + f] == x1.frames.data[i * 4 + f]);

  const auto self = cmd_eval(dir / "v.stf1", dir / "v.stf1", dir / "q.json");
  CHECK(self["report"]["mean_ssim"] == 1.0);
  CHECK(self["report"]["mean_psnr_db"] == "inf");
  const auto q = cmd_eval(dir / "r.stf1", dir / "v.stf1", dir / "q.json");
  const auto from_file = nlohmann::json::parse(slurp(dir / "q.json")).get<metrics::QualityReport>();
  CHECK(from_file == q["report"].get<metrics::QualityReport>());
  CHECK(from_file.psnr_db.size() == 8);
  CHECK_THROWS_AS(cmd_eval(dir / "r.stf1", dir / "m.stf1", ""), ShapeError);

  cmd_mask(16, 16, 8, 2, dir / "m8.stf1");
  CHECK_THROWS_AS(cmd_reconstruct(dir / "y.stf1", dir / "m8.stf1", dir / "w.stfc", DType::f32, dir / "x.stf1"),
                  ConfigError);
  cmd_mask(12, 16, 4, 2, dir / "m12.stf1");
  CHECK_THROWS_AS(cmd_reconstruct(dir / "y.stf1", dir / "m12.stf1", dir / "w.stfc", DType::f32, dir / "x.stf1"),
                  ShapeError);
}

TEST_CASE("colour reconstruction outputs three channels") {
  TempDir dir("color");
  TrainConfig c = tiny_config();
  c.model_overrides["in_channels"] = 4;
  c.model_overrides["out_channels"] = 3;
  cmd_mask(16, 16, 4, 2, dir / "m.stf1");
  save_stf1(dir / "v.stf1", synthetic_video<double>(16, 16, 3, 4, 1).frames);
  EncodeOptions opt;
  opt.color = true;
  cmd_encode(dir / "v.stf1", dir / "m.stf1", opt, dir / "y.stf1");
  cmd_init(c, 3, DType::f64, dir / "w.stfc");
  const auto r = cmd_reconstruct(dir / "y.stf1", dir / "m.stf1", dir / "w.stfc", DType::f64, dir / "r.stf1");
  CHECK(r["dims"] == nlohmann::json{16, 16, 3, 4});
  CHECK(cmd_eval(dir / "r.stf1", dir / "v.stf1", "")["report"]["psnr_db"].size() == 4);
}

TEST_CASE("cmd_flops reports") {
  FlopsRequest req;
  std::uint64_t last = 0;
  for (const char* p : {"S", "B", "L"}) {
    req.model = model::ModelConfig::preset(p);
    const auto j = cmd_flops(req, "");
    const std::uint64_t total = j["network"]["total_macs"];
    CHECK(total > last);
    last = total;
    const auto& s = j["scaling"];
    REQUIRE(s.size() == 3);
    const double ratio = s[2]["total"].get<double>() / s[1]["total"].get<double>();
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.02));
  }

  FlopsRequest att;
  att.dims = audit::AttentionDims{14, 14, 4, 8, 7, 7, 2};
  const auto a = cmd_flops(att, "");
  CHECK(a["attention"]["analytic_macs"]["slw_msa"] == a["attention"]["measured_macs"]["slw_msa"]);
  CHECK(a["attention"]["analytic_macs"]["tw_msa"] == a["attention"]["measured_macs"]["tw_msa"]);
  CHECK_FALSE(a.contains("network"));
  CHECK_THROWS_AS(cmd_flops({}, ""), ConfigError);
}
