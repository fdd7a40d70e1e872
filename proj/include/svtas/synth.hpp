#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "svtas/stream.hpp"
#include "svtas/train.hpp"

namespace svtas {

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t width = 16;
  std::size_t train_videos = 20;
  std::size_t test_videos = 5;
  std::size_t min_frames = 256;
  std::size_t max_frames = 512;
  std::size_t min_duration = 20;
  std::size_t max_duration = 80;
  double center_scale = 1.0;
  double noise = 1.25;  // sigma; ~90% nearest-centre ceiling at the defaults
  std::size_t blur = 6;  // boundary interpolation half-width b
  // Row-stochastic C x C matrix; empty means uniform over the other classes.
  std::vector<double> transition;
  std::uint64_t seed = 0;

  void validate() const;
};

// Class centres shared by every video of a dataset (derived from cfg.seed).
std::vector<double> class_centers(const SynthConfig& cfg);

// Markov segment sequence, frame = centre + N(0, sigma^2); the b frames on
// either side of a boundary blend linearly between the two centres.
FeatureStream gen_video(const SynthConfig& cfg, std::uint64_t video_seed, const std::string& id = "video");

// Splits generated in memory; ids train_000.., test_000...
Dataset gen_dataset(const SynthConfig& cfg);

// Writes <id>.feat, <id>.labels, classes.txt and manifest.txt ("split\tid").
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Fraction (percent) of frames whose nearest class centre is their label.
double nearest_center_accuracy(const std::vector<FeatureStream>& streams, const std::vector<double>& centers,
                               std::size_t classes);

// Stationary distribution of the segment-label chain.
std::vector<double> stationary_distribution(const SynthConfig& cfg);

}  // namespace svtas
