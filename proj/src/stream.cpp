#include "svtas/stream.hpp"

#include <algorithm>
#include <fstream>

#include "svtas/binary_io.hpp"
#include "svtas/error.hpp"
#include "svtas/ops.hpp"

namespace svtas {

void FeatureStream::validate() const {
  if (frames == 0 || width == 0) throw DataError("stream '" + id + "': empty stream");
  if (features.size() != frames * width)
    throw DataError("stream '" + id + "': " + std::to_string(features.size()) + " feature values for " +
                    std::to_string(frames) + "x" + std::to_string(width));
  if (labels.size() != frames)
    throw DataError("stream '" + id + "': " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(frames) + " frames");
  for (int l : labels)
    if (l < 0 || std::size_t(l) >= classes)
      throw DataError("stream '" + id + "': label " + std::to_string(l) + " outside [0," +
                      std::to_string(classes) + ")");
}

void ClipSpec::validate() const {
  if (stack == 0 || skip == 0) throw ConfigError("clip spec: k and p must be >= 1");
}

std::vector<Clip> make_clips(std::size_t frames, const ClipSpec& spec) {
  spec.validate();
  if (frames == 0) throw DataError("make_clips: stream has no frames");
  const std::size_t len = spec.length();
  std::vector<Clip> clips(spec.clip_count(frames));
  for (std::size_t j = 0; j < clips.size(); ++j) {
    Clip& c = clips[j];
    c.index = j;
    c.window_begin = j * len;
    c.window_end = std::min((j + 1) * len, frames);
    c.padded = c.window_length() < len;
    c.sampled_rows.resize(spec.stack);
    for (std::size_t b = 0; b < spec.stack; ++b) c.sampled_rows[b] = std::min(j * len + b * spec.skip, frames - 1);
  }
  return clips;
}

Tensor gather_block(const FeatureStream& stream, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size() * stream.width);
  for (std::size_t r : rows) {
    const auto src = stream.row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return Tensor::from({rows.size(), stream.width}, std::move(out));
}

std::vector<int> gather_labels(const FeatureStream& stream, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(stream.labels[r]);
  return out;
}

std::vector<int> window_labels(const FeatureStream& stream, const Clip& clip) {
  return {stream.labels.begin() + long(clip.window_begin), stream.labels.begin() + long(clip.window_end)};
}

namespace {

Tensor encode_checked(const ClipEncoder& encoder, const Tensor& block) {
  Tensor out = encoder(block);
  if (out.rank() != 3 || out.dim(0) != block.dim(0))
    throw ShapeError("clip encoder: expected [" + std::to_string(block.dim(0)) + ",G,D] output, got " +
                     shape_str(out.shape()));
  return out;
}

}  // namespace

Tensor clustering_features(const Clip& clip, const FeatureStream& stream, const ClipEncoder& encoder) {
  const Tensor encoded = encode_checked(encoder, gather_block(stream, clip.sampled_rows));
  return ops::mean(encoded, {1});
}

Tensor sequential_features(const Clip& clip, const FeatureStream& stream, const ClipEncoder& encoder,
                           std::size_t half_width) {
  std::vector<Tensor> rows;
  rows.reserve(clip.sampled_rows.size());
  const long last = long(stream.frames) - 1;
  for (std::size_t centre : clip.sampled_rows) {
    std::vector<std::size_t> window;
    for (long off = -long(half_width); off <= long(half_width); ++off)
      window.push_back(std::size_t(std::clamp(long(centre) + off, 0L, last)));
    const Tensor encoded = encode_checked(encoder, gather_block(stream, window));
    rows.push_back(ops::reshape(ops::mean(encoded, {0, 1}), {1, encoded.dim(2)}));
  }
  return ops::concat(rows, 0);
}

std::vector<double> upsample_predictions(std::span<const double> rows, std::size_t width, const ClipSpec& spec,
                                         std::size_t window_len) {
  if (window_len > spec.length())
    throw ShapeError("upsample_predictions: window " + std::to_string(window_len) + " exceeds clip length " +
                     std::to_string(spec.length()));
  if (rows.size() != spec.stack * width) throw ShapeError("upsample_predictions: expected k rows of the given width");
  std::vector<double> out;
  out.reserve(window_len * width);
  for (std::size_t t = 0; t < window_len; ++t) {
    const auto src = rows.subspan((t / spec.skip) * width, width);
    out.insert(out.end(), src.begin(), src.end());
  }
  return out;
}

std::vector<int> upsample_labels(std::span<const int> labels, const ClipSpec& spec, std::size_t window_len) {
  if (window_len > spec.length())
    throw ShapeError("upsample_labels: window " + std::to_string(window_len) + " exceeds clip length " +
                     std::to_string(spec.length()));
  if (labels.size() != spec.stack) throw ShapeError("upsample_labels: expected k labels");
  std::vector<int> out(window_len);
  for (std::size_t t = 0; t < window_len; ++t) out[t] = labels[t / spec.skip];
  return out;
}

std::vector<int> concat_episode(const std::vector<std::vector<int>>& blocks, std::size_t frames) {
  std::vector<int> out;
  out.reserve(frames);
  for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
  if (out.size() < frames)
    throw DataError("concat_episode: blocks cover " + std::to_string(out.size()) + " of " + std::to_string(frames) +
                    " frames");
  out.resize(frames);
  return out;
}

// ---- files ---------------------------------------------------------------

void write_features(const std::filesystem::path& path, const FeatureStream& stream) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write("SVTS", 4);
  binary::put<std::uint32_t>(os, 1);
  binary::put<std::uint32_t>(os, std::uint32_t(stream.frames));
  binary::put<std::uint32_t>(os, std::uint32_t(stream.width));
  for (double v : stream.features) binary::put_f32(os, v);
  if (!os) throw DataError("write failed: " + path.string());
}

FeatureStream read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  binary::expect_magic(is, "SVTS", path.string());
  const auto version = binary::get<std::uint32_t>(is, "version");
  if (version != 1) throw DataError(path.string() + ": unsupported feature version " + std::to_string(version));
  FeatureStream s;
  s.id = path.stem().string();
  s.frames = binary::get<std::uint32_t>(is, "T");
  s.width = binary::get<std::uint32_t>(is, "D");
  s.features.resize(s.frames * s.width);
  for (double& v : s.features) v = binary::get_f32(is, "features");
  return s;
}

void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (int l : labels) os << l << '\n';
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(line, &used));
      if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": not a class id: '" + line + "'");
    }
  }
  return out;
}

void write_class_map(const std::filesystem::path& path, const std::vector<std::string>& names) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& n : names) os << n << '\n';
}

std::vector<std::string> read_class_map(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

FeatureStream load_stream(const std::filesystem::path& dir, const std::string& id, std::size_t classes) {
  FeatureStream s = read_features(dir / (id + ".feat"));
  s.id = id;
  s.labels = read_labels(dir / (id + ".labels"));
  s.classes = classes;
  s.validate();
  return s;
}

}  // namespace svtas
