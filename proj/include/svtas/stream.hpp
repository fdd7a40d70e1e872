#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svtas/tensor.hpp"

namespace svtas {

// A "video": T frame feature rows of width D with frame-aligned labels in [0, C).
struct FeatureStream {
  std::string id;
  std::size_t frames = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<double> features;  // frames x width, row-major
  std::vector<int> labels;       // frames

  // Throws DataError if sizes or label ranges are inconsistent.
  void validate() const;
  std::span<const double> row(std::size_t t) const { return {features.data() + t * width, width}; }
};

// Frame stacking k, frame skipping p; one clip covers L = k * p raw frames.
struct ClipSpec {
  std::size_t stack = 1;  // k
  std::size_t skip = 1;   // p

  std::size_t length() const { return stack * skip; }
  std::size_t clip_count(std::size_t frames) const { return (frames + length() - 1) / length(); }
  void validate() const;
};

struct Clip {
  std::size_t index = 0;
  std::vector<std::size_t> sampled_rows;  // k rows, clamped to T-1
  std::size_t window_begin = 0;           // raw-frame label window [begin, end)
  std::size_t window_end = 0;
  bool padded = false;  // window shorter than L (only ever the last clip)

  std::size_t window_length() const { return window_end - window_begin; }
};

// Non-overlapping clips covering [0, frames): ceil(T / L) of them.
std::vector<Clip> make_clips(std::size_t frames, const ClipSpec& spec);

// Features at the clip's sampled rows, [k, D]. No gradient.
Tensor gather_block(const FeatureStream& stream, std::span<const std::size_t> rows);
std::vector<int> gather_labels(const FeatureStream& stream, std::span<const std::size_t> rows);
std::vector<int> window_labels(const FeatureStream& stream, const Clip& clip);

// Maps an [n, D_in] block to [n, G, D] (G "spatial" groups per position).
using ClipEncoder = std::function<Tensor(const Tensor&)>;

// Encode the whole clip block in one pass, then mean-pool the group axis: [k, D].
Tensor clustering_features(const Clip& clip, const FeatureStream& stream, const ClipEncoder& encoder);

// For each sampled position, encode the window of rows centred on it
// (half_width on each side, indices clamped to the stream) and pool time and
// groups to one row; stack to [k, D].
Tensor sequential_features(const Clip& clip, const FeatureStream& stream, const ClipEncoder& encoder,
                           std::size_t half_width);

// Nearest-neighbour expansion of per-position rows [k, width] to the clip's
// window: each row repeated p times, truncated to window_len rows.
std::vector<double> upsample_predictions(std::span<const double> rows, std::size_t width, const ClipSpec& spec,
                                         std::size_t window_len);
std::vector<int> upsample_labels(std::span<const int> labels, const ClipSpec& spec, std::size_t window_len);

// Concatenates per-clip label blocks and trims to exactly `frames`.
std::vector<int> concat_episode(const std::vector<std::vector<int>>& blocks, std::size_t frames);

// ---- files ---------------------------------------------------------------
// Features: "SVTS", u32 version=1, u32 T, u32 D, T*D float32 (little-endian).
void write_features(const std::filesystem::path& path, const FeatureStream& stream);
// Fills frames/width/features of a stream read from disk.
FeatureStream read_features(const std::filesystem::path& path);
// One decimal class id per line.
void write_labels(const std::filesystem::path& path, std::span<const int> labels);
std::vector<int> read_labels(const std::filesystem::path& path);
// One class name per line; line number is the id.
void write_class_map(const std::filesystem::path& path, const std::vector<std::string>& names);
std::vector<std::string> read_class_map(const std::filesystem::path& path);

// Reads <dir>/<id>.feat and <dir>/<id>.labels into a validated stream.
FeatureStream load_stream(const std::filesystem::path& dir, const std::string& id, std::size_t classes);

}  // namespace svtas
