#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "exitrack/data/crop.hpp"
#include "exitrack/data/generator.hpp"
#include "exitrack/data/reference_tracker.hpp"

using namespace exitrack;
using namespace exitrack::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("exitrack_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("box iou examples") {
  PixelBox a{0, 0, 2, 2}, b{1, 1, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, PixelBox{5, 5, 1, 1}) == 0.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  auto n = BoundingBox::from_corners(0.1, 0.2, 0.5, 0.6);
  CHECK(n.cx == doctest::Approx(0.3));
  CHECK(n.w == doctest::Approx(0.4));
}

TEST_CASE("difficulty table") {
  auto easy = difficulty_preset(0);
  CHECK(easy.distractors == 0);
  CHECK(easy.occlusion_prob == 0.0);
  auto hard = difficulty_preset(4);
  CHECK(hard.distractors >= 3);
  CHECK(hard.similarity >= 0.9);
  CHECK(hard.occlusion_prob >= 0.3);
  CHECK_THROWS_AS(difficulty_preset(5), ConfigError);
  CHECK_THROWS_AS(difficulty_preset(-1), ConfigError);
}

TEST_CASE("impossible generator config is rejected") {
  GeneratorConfig c;
  c.frame_size = 32;
  c.target_min = 40;
  c.target_max = 50;
  num::RandomState rng(1);
  CHECK_THROWS_AS(generate_sequence(c, rng), ConfigError);
}

TEST_CASE("generated sequences are deterministic and keep the target in frame") {
  for (int level = 0; level < kDifficultyLevels; ++level) {
    const auto cfg = difficulty_preset(level, 30);
    num::RandomState r1(100 + level), r2(100 + level);
    const auto s1 = generate_sequence(cfg, r1);
    const auto s2 = generate_sequence(cfg, r2);
    REQUIRE(s1.frames.size() == 30);
    for (std::size_t t = 0; t < s1.frames.size(); ++t) {
      CHECK(s1.frames[t].image == s2.frames[t].image);
      CHECK(s1.frames[t].gt == s2.frames[t].gt);
      const auto& gt = s1.frames[t].gt;
      CHECK(gt.x >= 0);
      CHECK(gt.y >= 0);
      CHECK(gt.x + gt.w <= 128);
      CHECK(gt.y + gt.h <= 128);
      CHECK(gt.w >= 1);
      CHECK(gt.h >= 1);
      // containment: IoU with the frame equals the area ratio
      CHECK(iou(gt, PixelBox{0, 0, 128, 128}) == doctest::Approx(gt.area() / (128.0 * 128.0)).epsilon(1e-12));
    }
    if (level == 0) CHECK(s1.attributes.empty());
    if (level == 4) CHECK(s1.attributes.count("distractor") == 1);
  }
}

TEST_CASE("crop examples") {
  Sequence seq;
  seq.frames.push_back({Image(128, 128, 0.5f), PixelBox{56, 56, 16, 16}});
  seq.frames.push_back({Image(128, 128, 0.5f), PixelBox{40, 30, 16, 16}});
  num::RandomState rng(3);
  CropConfig cfg;
  auto pair = crop_pair(seq, 0, 1, cfg, rng);
  CHECK(pair.template_crop.shape() == num::Shape{3, 32, 32});
  CHECK(pair.search_crop.shape() == num::Shape{3, 64, 64});
  CHECK(pair.target.cx == doctest::Approx(0.5));
  CHECK(pair.target.cy == doctest::Approx(0.5));
  CHECK(pair.search_window.side == doctest::Approx(64.0));
  CHECK(pair.target.w == doctest::Approx(0.25));
  CHECK_THROWS_AS(crop_pair(seq, 0, 2, cfg, rng), ContractError);
}

TEST_CASE("crop past the frame edge is mean padded") {
  Image img(128, 128);
  for (std::size_t y = 0; y < 128; ++y)
    for (std::size_t x = 0; x < 128; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = x < 64 ? 0.2f : 0.6f;
  Sequence seq;
  seq.frames.push_back({img, PixelBox{2, 2, 12, 12}});
  seq.frames.push_back({img, PixelBox{1, 1, 12, 12}});
  CropConfig cfg;
  cfg.center_jitter = 0.6;
  num::RandomState rng(5);
  for (int i = 0; i < 20; ++i) {
    auto pair = crop_pair(seq, 0, 1, cfg, rng);
    CHECK(pair.target.valid());
    CHECK(pair.search_crop.at(0) == doctest::Approx(0.4f));  // top-left sample lies outside
  }
}

TEST_CASE("crop back-projection recovers the gt box") {
  num::RandomState rng(9);
  auto seq = generate_sequence(difficulty_preset(2, 12), rng);
  CropConfig cfg;
  cfg.center_jitter = 0.4;
  cfg.scale_jitter = 0.15;
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    auto pair = crop_pair(seq, 0, t, cfg, rng);
    const auto back = from_crop(pair.target, pair.search_window);
    const auto& gt = seq.frames[t].gt;
    CHECK(std::abs(back.x - gt.x) <= 0.5);
    CHECK(std::abs(back.y - gt.y) <= 0.5);
    CHECK(std::abs(back.w - gt.w) <= 0.5);
    CHECK(std::abs(back.h - gt.h) <= 0.5);
  }
}

TEST_CASE("sequence round trip through disk") {
  num::RandomState rng(17);
  auto seq = generate_sequence(difficulty_preset(3, 5), rng);
  seq.name = "seq-0001";
  const auto dir = scratch_dir("roundtrip") / seq.name;
  write_sequence(seq, dir);
  CHECK(fs::exists(dir / "img" / "00000001.ppm"));
  const auto back = read_sequence(dir);
  CHECK(back.name == seq.name);
  CHECK(back.difficulty == 3);
  CHECK(back.attributes == seq.attributes);
  REQUIRE(back.frames.size() == seq.frames.size());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    CHECK(back.frames[t].gt == seq.frames[t].gt);
    CHECK(back.frames[t].image == seq.frames[t].image);
  }
}

TEST_CASE("annotation parsing") {
  const auto b = parse_annotation("10,20,30,40", 1);
  CHECK(b == PixelBox{10, 20, 30, 40});
  CHECK(parse_annotation("1.5, 2.25,3,4\r", 1) == PixelBox{1.5, 2.25, 3, 4});
  const auto dir = scratch_dir("annot");
  {
    std::ofstream gt(dir / "groundtruth.txt");
    gt << "1,2,3,4\n5,6,7\n";
  }
  try {
    read_groundtruth(dir / "groundtruth.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_groundtruth(dir / "missing.txt"), IoError);
  CHECK_THROWS_AS(read_sequence(dir / "nothing"), IoError);
}

TEST_CASE("difficulty is monotone for the reference tracker") {
  double previous = 2.0;
  for (int level = 0; level < kDifficultyLevels; ++level) {
    double total = 0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      num::RandomState rng(num::RandomState::splitmix64(1000 * level + i));
      total += reference_mean_iou(generate_sequence(difficulty_preset(level, 30), rng));
    }
    const double mean = total / n;
    MESSAGE("level " << level << " reference mean IoU " << mean);
    CHECK(mean <= previous);
    previous = mean;
  }
}

}  // TEST_SUITE
