#include "svtas/model.hpp"

#include <fstream>

#include "svtas/binary_io.hpp"
#include "svtas/error.hpp"

namespace svtas {

Model::Model(ModelConfig cfg, std::size_t input_width, std::size_t classes, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.finalize(input_width, classes);
  Rng rng(seed);
  encoder_ = Encoder(cfg_.encoder, rng);
  hbrt_ = Hbrt(cfg_.hbrt, rng);
  agent_ = Agent(cfg_.agent, rng);
  encoder_.collect(params_, "encoder");
  hbrt_.collect(params_, "hbrt");
  agent_.collect(params_, "agent");
}

Tensor Model::encode_clip(const FeatureStream& stream, const Clip& clip) const {
  const ClipEncoder enc = [this](const Tensor& block) { return encoder_.forward(block); };
  if (cfg_.paradigm == Paradigm::sequential) return sequential_features(clip, stream, enc, cfg_.half_width());
  return clustering_features(clip, stream, enc);
}

Model::ClipStep Model::step(const FeatureStream& stream, const Clip& clip, const MemoryBank& memory) const {
  if (stream.width != cfg_.encoder.input_width)
    throw ShapeError("model: stream width " + std::to_string(stream.width) + " differs from encoder input " +
                     std::to_string(cfg_.encoder.input_width));
  ClipStep out;
  out.features = encode_clip(stream, clip);
  std::tie(out.state, out.memory) = hbrt_.forward(out.features, memory);
  out.action = agent_.forward(out.state);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write("SVCK", 4);
  binary::put<std::uint32_t>(os, 1);
  binary::put<std::uint32_t>(os, std::uint32_t(params.size()));
  for (const auto& [name, t] : params) {
    binary::put<std::uint16_t>(os, std::uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    binary::put<std::uint8_t>(os, std::uint8_t(t.rank()));
    for (std::size_t d : t.shape()) binary::put<std::uint32_t>(os, std::uint32_t(d));
    for (double v : t.values()) binary::put_f32(os, v);
  }
  if (!os) throw DataError("write failed: " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  binary::expect_magic(is, "SVCK", path.string());
  const auto version = binary::get<std::uint32_t>(is, "version");
  if (version != 1) throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = binary::get<std::uint32_t>(is, "tensor count");
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(binary::get<std::uint16_t>(is, "name length"), '\0');
    if (!is.read(name.data(), std::streamsize(name.size()))) throw DataError(path.string() + ": truncated name");
    const auto rank = binary::get<std::uint8_t>(is, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = binary::get<std::uint32_t>(is, "dims");
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = binary::get_f32(is, "payload");
    out.emplace(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  const auto stored = read_checkpoint(path);
  if (stored.size() != params.size())
    throw DataError(path.string() + ": checkpoint holds " + std::to_string(stored.size()) + " tensors, model has " +
                    std::to_string(params.size()));
  for (auto& [name, t] : params) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw DataError(path.string() + ": missing tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw DataError(path.string() + ": tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                      ", model expects " + shape_str(t.shape()));
    const auto src = it->second.values();
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
  }
}

}  // namespace svtas
