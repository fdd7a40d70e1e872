#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "svtas/binary_io.hpp"
#include "svtas/error.hpp"
#include "svtas/ops.hpp"

using namespace svtas;
namespace fs = std::filesystem;

namespace {

// Identity "encoder" with a singleton group axis.
Tensor identity_encoder(const Tensor& block) { return ops::reshape(block, {block.dim(0), 1, block.dim(1)}); }

// Doubles the block into two groups (x and 3x) so pooling has work to do.
Tensor two_group_encoder(const Tensor& block) {
  const std::size_t n = block.dim(0), d = block.dim(1);
  return ops::reshape(ops::concat({block, ops::scale(block, 3.0)}, 1), {n, 2, d});
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("svtas_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("clips for ten frames with k=4, p=2") {
  const auto clips = make_clips(10, {4, 2});
  REQUIRE(clips.size() == 2);
  CHECK(clips[0].sampled_rows == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(clips[0].window_begin == 0);
  CHECK(clips[0].window_end == 8);
  CHECK_FALSE(clips[0].padded);
  CHECK(clips[1].sampled_rows == std::vector<std::size_t>{8, 9, 9, 9});
  CHECK(clips[1].window_begin == 8);
  CHECK(clips[1].window_end == 10);
  CHECK(clips[1].padded);
}

TEST_CASE("exact and degenerate clip counts") {
  const auto eight = make_clips(8, {4, 2});
  REQUIRE(eight.size() == 1);
  CHECK_FALSE(eight[0].padded);
  const auto one = make_clips(1, {4, 2});
  REQUIRE(one.size() == 1);
  CHECK(one[0].sampled_rows == std::vector<std::size_t>{0, 0, 0, 0});
  CHECK(one[0].window_end == 1);
  CHECK_THROWS(make_clips(0, {4, 2}));
  CHECK_THROWS(make_clips(5, {0, 2}));
}

TEST_CASE("label windows partition the stream") {
  for (std::size_t t = 1; t <= 200; ++t)
    for (std::size_t k = 1; k <= 8; ++k)
      for (std::size_t p = 1; p <= 8; ++p) {
        const ClipSpec spec{k, p};
        const auto clips = make_clips(t, spec);
        REQUIRE(clips.size() == (t + k * p - 1) / (k * p));
        std::size_t next = 0;
        for (std::size_t j = 0; j < clips.size(); ++j) {
          REQUIRE(clips[j].window_begin == next);
          REQUIRE(clips[j].window_length() >= 1);
          REQUIRE(clips[j].window_length() <= spec.length());
          REQUIRE(clips[j].padded == (j + 1 == clips.size() && clips[j].window_length() < spec.length()));
          for (std::size_t b = 0; b < k; ++b) REQUIRE(clips[j].sampled_rows[b] == std::min(j * k * p + b * p, t - 1));
          next = clips[j].window_end;
        }
        REQUIRE(next == t);
      }
}

TEST_CASE("clustering features with the identity encoder are the raw rows") {
  Rng rng(1);
  const FeatureStream s = test::random_stream(rng, 10, 3, 2);
  const auto clips = make_clips(10, {4, 2});
  const Tensor f = clustering_features(clips[1], s, identity_encoder);
  REQUIRE(f.shape() == Shape{4, 3});
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t d = 0; d < 3; ++d) CHECK(f.at(b, d) == s.row(clips[1].sampled_rows[b])[d]);
}

TEST_CASE("constant clip gives equal rows") {
  FeatureStream s;
  s.id = "c";
  s.frames = 8;
  s.width = 2;
  s.classes = 2;
  for (std::size_t t = 0; t < 8; ++t) {
    s.features.insert(s.features.end(), {0.25, -1.5});
    s.labels.push_back(0);
  }
  const auto clip = make_clips(8, {4, 2})[0];
  for (const Tensor& f : {clustering_features(clip, s, two_group_encoder), sequential_features(clip, s, two_group_encoder, 3)})
    for (std::size_t b = 1; b < 4; ++b)
      for (std::size_t d = 0; d < 2; ++d) CHECK(f.at(b, d) == f.at(0, d));
}

TEST_CASE("clustering features equal encode-then-pool by hand") {
  Rng rng(2);
  const FeatureStream s = test::random_stream(rng, 21, 4, 3);
  for (const Clip& clip : make_clips(21, {3, 3})) {
    const Tensor f = clustering_features(clip, s, two_group_encoder);
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t d = 0; d < 4; ++d) {
        const double x = s.row(clip.sampled_rows[b])[d];
        CHECK(f.at(b, d) == doctest::Approx((x + 3.0 * x) / 2.0).epsilon(1e-15));
      }
  }
}

TEST_CASE("sequential features with a one-frame window equal clustering features") {
  Rng rng(3);
  const FeatureStream s = test::random_stream(rng, 30, 3, 2);
  for (const Clip& clip : make_clips(30, {4, 2})) {
    const Tensor a = clustering_features(clip, s, identity_encoder);
    const Tensor b = sequential_features(clip, s, identity_encoder, 0);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  }
}

TEST_CASE("sequential features pool a clamped centred window") {
  Rng rng(4);
  const FeatureStream s = test::random_stream(rng, 13, 2, 2);
  const std::size_t half = 2;
  for (const Clip& clip : make_clips(13, {3, 2})) {
    const Tensor f = sequential_features(clip, s, two_group_encoder, half);
    for (std::size_t b = 0; b < 3; ++b) {
      const long centre = long(clip.sampled_rows[b]);  // already clamped in the tail clip
      for (std::size_t d = 0; d < 2; ++d) {
        double acc = 0.0;
        for (long o = -long(half); o <= long(half); ++o) {
          const long r = std::clamp<long>(centre + o, 0, 12);
          acc += 4.0 * s.row(std::size_t(r))[d];  // x + 3x
        }
        CHECK(f.at(b, d) == doctest::Approx(acc / double(2 * (2 * half + 1))).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("clustering features read nothing past their clip") {
  Rng rng(5);
  FeatureStream s = test::random_stream(rng, 40, 3, 2);
  const ClipSpec spec{4, 3};
  const auto clips = make_clips(40, spec);
  for (std::size_t j = 0; j < clips.size(); ++j) {
    FeatureStream poisoned = s;
    for (std::size_t t = (j + 1) * spec.length(); t < 40; ++t)
      for (std::size_t d = 0; d < 3; ++d) poisoned.features[t * 3 + d] = 1e6 + double(t);
    const Tensor a = clustering_features(clips[j], s, two_group_encoder);
    const Tensor b = clustering_features(clips[j], poisoned, two_group_encoder);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  }
}

TEST_CASE("upsampling repeats each position p times") {
  const std::vector<double> cols{1.0, 2.0};  // k=2 rows of width 1
  CHECK(upsample_predictions(cols, 1, {2, 2}, 4) == std::vector<double>{1, 1, 2, 2});
  CHECK(upsample_predictions(cols, 1, {2, 2}, 3) == std::vector<double>{1, 1, 2});
  CHECK(upsample_predictions(cols, 1, {2, 1}, 1) == std::vector<double>{1});
  CHECK_THROWS(upsample_predictions(cols, 1, {2, 2}, 5));
  const std::vector<double> wide{1, 2, 3, 4};  // two rows of width 2
  CHECK(upsample_predictions(wide, 2, {2, 2}, 3) == std::vector<double>{1, 2, 1, 2, 3, 4});
}

TEST_CASE("episode concatenation") {
  CHECK(concat_episode({std::vector<int>(8, 1), std::vector<int>(2, 0)}, 10).size() == 10);
  CHECK(concat_episode({{1, 1, 2, 2}, {3, 3, 3, 3}}, 6) == std::vector<int>{1, 1, 2, 2, 3, 3});
  CHECK_THROWS(concat_episode({{1, 2}}, 3));
}

TEST_CASE("episode upsampling matches index arithmetic") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = 1 + rng.uniform_int(0, 99), k = 1 + rng.uniform_int(0, 5), p = 1 + rng.uniform_int(0, 4);
    const ClipSpec spec{k, p};
    std::vector<int> per_position;  // label per sampled position, all clips
    std::vector<std::vector<int>> blocks;
    for (const Clip& clip : make_clips(t, spec)) {
      std::vector<int> pos(k);
      for (int& l : pos) l = int(rng.uniform_int(0, 4));
      per_position.insert(per_position.end(), pos.begin(), pos.end());
      blocks.push_back(upsample_labels(pos, spec, clip.window_length()));
    }
    const auto full = concat_episode(blocks, t);
    REQUIRE(full.size() == t);
    for (std::size_t i = 0; i < t; ++i) CHECK(full[i] == per_position[(i / (k * p)) * k + (i % (k * p)) / p]);
  }
}

TEST_CASE("ground truth round trips through clip windows") {
  Rng rng(7);
  const FeatureStream s = test::random_stream(rng, 37, 2, 5);
  std::vector<std::vector<int>> blocks;
  for (const Clip& clip : make_clips(37, {5, 2})) blocks.push_back(window_labels(s, clip));
  CHECK(concat_episode(blocks, 37) == s.labels);
}

TEST_CASE("stream validation") {
  Rng rng(8);
  FeatureStream s = test::random_stream(rng, 5, 2, 3);
  CHECK_NOTHROW(s.validate());
  s.labels[2] = 3;
  CHECK_THROWS_AS(s.validate(), DataError);
  s.labels[2] = 0;
  s.features.pop_back();
  CHECK_THROWS_AS(s.validate(), DataError);
}

TEST_CASE("feature file layout is exact") {
  const fs::path dir = scratch("feat");
  FeatureStream s;
  s.id = "v";
  s.frames = 2;
  s.width = 2;
  s.classes = 2;
  s.features = {1.0, -2.0, 0.5, 3.0};
  s.labels = {0, 1};
  write_features(dir / "v.feat", s);
  std::ifstream f(dir / "v.feat", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(f)), {});
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 4 * 4);
  CHECK(bytes.substr(0, 4) == "SVTS");
  const auto u32 = [&](std::size_t at) {
    return std::uint32_t(std::uint8_t(bytes[at])) | std::uint32_t(std::uint8_t(bytes[at + 1])) << 8 |
           std::uint32_t(std::uint8_t(bytes[at + 2])) << 16 | std::uint32_t(std::uint8_t(bytes[at + 3])) << 24;
  };
  CHECK(u32(4) == 1);
  CHECK(u32(8) == 2);
  CHECK(u32(12) == 2);
  CHECK(u32(16) == 0x3f800000u);  // 1.0f
  CHECK(u32(20) == 0xc0000000u);  // -2.0f
  const FeatureStream back = read_features(dir / "v.feat");
  CHECK(back.features == s.features);
}

TEST_CASE("label and class map files") {
  const fs::path dir = scratch("labels");
  write_labels(dir / "a.labels", std::vector<int>{2, 0, 1});
  std::ifstream f(dir / "a.labels");
  const std::string text((std::istreambuf_iterator<char>(f)), {});
  CHECK(text == "2\n0\n1\n");
  CHECK(read_labels(dir / "a.labels") == std::vector<int>{2, 0, 1});
  write_class_map(dir / "classes.txt", {"pour", "stir"});
  CHECK(read_class_map(dir / "classes.txt") == std::vector<std::string>{"pour", "stir"});
  CHECK_THROWS_AS(read_labels(dir / "missing.labels"), DataError);
}

TEST_CASE("corrupt feature files are rejected") {
  const fs::path dir = scratch("corrupt");
  {
    std::ofstream f(dir / "bad.feat", std::ios::binary);
    f << "SVTX\x01\0\0\0";
  }
  CHECK_THROWS_AS(read_features(dir / "bad.feat"), DataError);
  {
    std::ofstream f(dir / "short.feat", std::ios::binary);
    f.write("SVTS\x01\0\0\0\x02\0\0\0\x02\0\0\0", 16);
  }
  CHECK_THROWS_AS(read_features(dir / "short.feat"), DataError);
}
