#include "svtas/synth.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "svtas/error.hpp"
#include "svtas/random.hpp"

namespace svtas {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

int next_label(const SynthConfig& cfg, int current, Rng& rng) {
  const std::size_t c = cfg.classes;
  if (cfg.transition.empty()) {
    const auto pick = std::size_t(rng.uniform_int(0, std::int64_t(c) - 2));
    return int(pick >= std::size_t(current) ? pick + 1 : pick);
  }
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    acc += cfg.transition[std::size_t(current) * c + j];
    if (u < acc) return int(j);
  }
  return int(c - 1);
}

}  // namespace

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (width == 0) throw ConfigError("synth: width must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("synth: noise must be >= 0");
  if (min_frames == 0 || min_frames > max_frames) throw ConfigError("synth: invalid frame range");
  if (min_duration == 0 || min_duration > max_duration) throw ConfigError("synth: invalid duration range");
  if (!transition.empty()) {
    if (transition.size() != classes * classes) throw ConfigError("synth: transition matrix must be C x C");
    for (std::size_t i = 0; i < classes; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < classes; ++j) {
        if (transition[i * classes + j] < 0.0) throw ConfigError("synth: negative transition probability");
        row += transition[i * classes + j];
      }
      if (std::abs(row - 1.0) > 1e-9) throw ConfigError("synth: transition rows must sum to 1");
    }
  }
}

std::vector<double> class_centers(const SynthConfig& cfg) {
  Rng rng(mix(cfg.seed, 0xce17e5));
  std::vector<double> centers(cfg.classes * cfg.width);
  for (double& v : centers) v = cfg.center_scale * rng.normal();
  return centers;
}

FeatureStream gen_video(const SynthConfig& cfg, std::uint64_t video_seed, const std::string& id) {
  cfg.validate();
  const std::vector<double> centers = class_centers(cfg);
  Rng rng(mix(cfg.seed, video_seed));
  const auto frames = std::size_t(rng.uniform_int(std::int64_t(cfg.min_frames), std::int64_t(cfg.max_frames)));

  FeatureStream s;
  s.id = id;
  s.frames = frames;
  s.width = cfg.width;
  s.classes = cfg.classes;
  std::vector<std::size_t> boundaries;  // first frame of every segment after the first
  int label = int(rng.uniform_int(0, std::int64_t(cfg.classes) - 1));
  while (s.labels.size() < frames) {
    if (!s.labels.empty()) {
      label = next_label(cfg, label, rng);
      boundaries.push_back(s.labels.size());
    }
    const auto dur = std::size_t(rng.uniform_int(std::int64_t(cfg.min_duration), std::int64_t(cfg.max_duration)));
    s.labels.insert(s.labels.end(), std::min(dur, frames - s.labels.size()), label);
  }

  // base signal: own centre, blended across boundaries
  s.features.resize(frames * cfg.width);
  for (std::size_t t = 0; t < frames; ++t)
    std::copy_n(centers.begin() + long(std::size_t(s.labels[t]) * cfg.width), cfg.width,
                s.features.begin() + long(t * cfg.width));
  const long b = long(cfg.blur);
  for (std::size_t at : boundaries) {
    if (b == 0) break;
    const std::size_t from = std::size_t(s.labels[at - 1]), to = std::size_t(s.labels[at]);
    for (long t = long(at) - b; t < long(at) + b; ++t) {
      if (t < 0 || t >= long(frames)) continue;
      const double alpha = (double(t - (long(at) - b)) + 0.5) / double(2 * b);
      for (std::size_t d = 0; d < cfg.width; ++d)
        s.features[std::size_t(t) * cfg.width + d] =
            (1.0 - alpha) * centers[from * cfg.width + d] + alpha * centers[to * cfg.width + d];
    }
  }
  for (double& v : s.features) v += cfg.noise * rng.normal();
  return s;
}

Dataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset data;
  for (std::size_t c = 0; c < cfg.classes; ++c) data.class_names.push_back("action_" + std::to_string(c));
  const auto name = [](const char* split, std::size_t i) {
    std::ostringstream os;
    os << split << '_' << std::setw(3) << std::setfill('0') << i;
    return os.str();
  };
  for (std::size_t i = 0; i < cfg.train_videos; ++i) data.train.push_back(gen_video(cfg, mix(1, i), name("train", i)));
  for (std::size_t i = 0; i < cfg.test_videos; ++i) data.test.push_back(gen_video(cfg, mix(2, i), name("test", i)));
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  write_class_map(dir / "classes.txt", data.class_names);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.txt").string());
  const auto put = [&](const char* split, const std::vector<FeatureStream>& streams) {
    for (const FeatureStream& s : streams) {
      write_features(dir / (s.id + ".feat"), s);
      write_labels(dir / (s.id + ".labels"), s.labels);
      manifest << split << '\t' << s.id << '\n';
    }
  };
  put("train", data.train);
  put("test", data.test);
  if (!manifest) throw DataError("write failed: " + (dir / "manifest.txt").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.class_names = read_class_map(dir / "classes.txt");
  if (data.class_names.size() < 2) throw DataError(dir.string() + ": class map needs at least 2 classes");
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot open " + (dir / "manifest.txt").string());
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("manifest: expected 'split<TAB>id', got '" + line + "'");
    const std::string split = line.substr(0, tab), id = line.substr(tab + 1);
    FeatureStream s = load_stream(dir, id, data.classes());
    if (split == "train") data.train.push_back(std::move(s));
    else if (split == "test") data.test.push_back(std::move(s));
    else throw DataError("manifest: unknown split '" + split + "'");
  }
  if (data.train.empty() && data.test.empty()) throw DataError(dir.string() + ": manifest lists no videos");
  return data;
}

double nearest_center_accuracy(const std::vector<FeatureStream>& streams, const std::vector<double>& centers,
                               std::size_t classes) {
  std::size_t hit = 0, total = 0;
  for (const FeatureStream& s : streams) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      const auto row = s.row(t);
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < classes; ++c) {
        double d = 0.0;
        for (std::size_t i = 0; i < s.width; ++i) {
          const double diff = row[i] - centers[c * s.width + i];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      hit += int(best) == s.labels[t];
      ++total;
    }
  }
  return total ? 100.0 * double(hit) / double(total) : 0.0;
}

std::vector<double> stationary_distribution(const SynthConfig& cfg) {
  const std::size_t c = cfg.classes;
  std::vector<double> p(c, 1.0 / double(c)), next(c);
  if (cfg.transition.empty()) return p;
  for (int it = 0; it < 10000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) next[j] += p[i] * cfg.transition[i * c + j];
    double delta = 0.0;
    for (std::size_t j = 0; j < c; ++j) delta = std::max(delta, std::abs(next[j] - p[j]));
    p.swap(next);
    if (delta < 1e-15) break;
  }
  return p;
}

}  // namespace svtas
