#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "svtas/error.hpp"
#include "svtas/synth.hpp"

using namespace svtas;
namespace fs = std::filesystem;

namespace {

// the feature file stores float32
std::vector<double> as_stored(std::vector<double> v) {
  for (double& x : v) x = double(float(x));
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

SynthConfig small() {
  SynthConfig cfg;
  cfg.train_videos = 3;
  cfg.test_videos = 2;
  cfg.min_frames = 60;
  cfg.max_frames = 90;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("noise-free, unblurred frames sit on their centres") {
  SynthConfig cfg = small();
  cfg.noise = 0.0;
  cfg.blur = 0;
  const auto centers = class_centers(cfg);
  const FeatureStream s = gen_video(cfg, 5);
  REQUIRE(s.labels.size() == s.frames);
  CHECK(s.frames >= 60);
  CHECK(s.frames <= 90);
  for (std::size_t t = 0; t < s.frames; ++t)
    for (std::size_t d = 0; d < cfg.width; ++d)
      CHECK(s.features[t * cfg.width + d] == centers[std::size_t(s.labels[t]) * cfg.width + d]);
}

TEST_CASE("blur blends linearly across a boundary") {
  SynthConfig cfg = small();
  cfg.noise = 0.0;
  cfg.blur = 3;
  const auto centers = class_centers(cfg);
  const FeatureStream s = gen_video(cfg, 9);
  std::size_t at = 1;
  while (s.labels[at] == s.labels[at - 1]) ++at;
  const std::size_t a = std::size_t(s.labels[at - 1]), b = std::size_t(s.labels[at]);
  // frames at-3 .. at+2 take alpha = 1/12, 3/12, ..., 11/12
  for (int i = 0; i < 6; ++i) {
    const std::size_t t = at - 3 + std::size_t(i);
    const double alpha = (i + 0.5) / 6.0;
    CHECK(s.features[t * cfg.width] == doctest::Approx((1 - alpha) * centers[a * cfg.width] +
                                                       alpha * centers[b * cfg.width]));
  }
}

TEST_CASE("two classes with the default chain strictly alternate") {
  SynthConfig cfg = small();
  cfg.classes = 2;
  const FeatureStream s = gen_video(cfg, 3);
  std::vector<int> seq{s.labels[0]};
  for (int l : s.labels)
    if (l != seq.back()) seq.push_back(l);
  for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i] != seq[i - 1]);
  CHECK(seq.size() >= 2);
}

TEST_CASE("label marginals follow the stationary distribution") {
  SynthConfig cfg;
  cfg.classes = 3;
  cfg.width = 1;
  cfg.min_frames = cfg.max_frames = 5000;
  cfg.transition = {0.0, 0.8, 0.2, 0.5, 0.0, 0.5, 0.9, 0.1, 0.0};
  cfg.seed = 3;
  const auto pi = stationary_distribution(cfg);
  // pi = pi P by hand with pi0 = 1: pi2 = 0.2 + 0.5 pi1, pi1 = 0.8 + 0.1 pi2
  const double x2 = 0.6 / 0.95, x1 = 0.8 + 0.1 * x2;
  const double z = 1.0 + x1 + x2;
  CHECK(pi[0] == doctest::Approx(1.0 / z).epsilon(1e-9));
  CHECK(pi[1] == doctest::Approx(x1 / z).epsilon(1e-9));
  CHECK(pi[2] == doctest::Approx(x2 / z).epsilon(1e-9));

  std::vector<double> counts(3, 0.0);
  double total = 0.0;
  for (std::uint64_t v = 0; total < 1e5; ++v) {
    const FeatureStream s = gen_video(cfg, v);
    for (int l : s.labels) counts[std::size_t(l)] += 1.0;
    total += double(s.frames);
  }
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(counts[c] / total - pi[c]) <= 0.02);
}

TEST_CASE("datasets are byte-identical per seed and round-trip through disk") {
  const SynthConfig cfg = small();
  const fs::path a = fs::temp_directory_path() / "svtas_synth_a", b = fs::temp_directory_path() / "svtas_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const Dataset data = gen_dataset(cfg);
  write_dataset(data, a);
  write_dataset(gen_dataset(cfg), b);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    ++files;
  }
  CHECK(files == 2 * 5 + 2);

  std::ifstream manifest(a / "manifest.txt");
  std::size_t lines = 0;
  for (std::string line; std::getline(manifest, line);) ++lines;
  CHECK(lines == cfg.train_videos + cfg.test_videos);

  const Dataset back = load_dataset(a);
  CHECK(back.class_names == data.class_names);
  REQUIRE(back.train.size() == 3);
  REQUIRE(back.test.size() == 2);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.train[i].id == data.train[i].id);
    CHECK(back.train[i].features == as_stored(data.train[i].features));
    CHECK(back.train[i].labels == data.train[i].labels);
  }
  CHECK(back.test[1].features == as_stored(data.test[1].features));

  SynthConfig other = cfg;
  other.seed = 18;
  CHECK(gen_dataset(other).train[0].features != data.train[0].features);
}

TEST_CASE("nearest centre is perfect when noise is small and there is no blur") {
  SynthConfig cfg = small();
  cfg.noise = 0.05;
  cfg.blur = 0;
  const Dataset data = gen_dataset(cfg);
  CHECK(nearest_center_accuracy(data.test, class_centers(cfg), cfg.classes) == 100.0);
}

TEST_CASE("synth rejects bad configs and paths") {
  SynthConfig cfg = small();
  cfg.classes = 1;
  CHECK_THROWS_AS(gen_dataset(cfg), ConfigError);
  cfg = small();
  cfg.noise = -1.0;
  CHECK_THROWS_AS(gen_dataset(cfg), ConfigError);
  cfg = small();
  cfg.classes = 2;
  cfg.transition = {0.5, 0.6, 1.0, 0.0};
  CHECK_THROWS_AS(gen_dataset(cfg), ConfigError);
  const fs::path file = fs::temp_directory_path() / "svtas_synth_file";
  std::ofstream(file) << "x";
  CHECK_THROWS_AS(write_dataset(gen_dataset(small()), file / "sub"), DataError);
}
