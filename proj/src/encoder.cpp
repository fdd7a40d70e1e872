#include "svtas/encoder.hpp"

#include "svtas/error.hpp"

namespace svtas {

void EncoderConfig::validate() const {
  if (input_width == 0 || hidden_width == 0 || output_width == 0 || groups == 0 || layers == 0)
    throw ConfigError("encoder: widths, groups and layer count must be >= 1");
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = cfg_.input_width;
  for (std::size_t l = 0; l + 1 < cfg_.layers; ++l) {
    layers_.emplace_back(in, cfg_.hidden_width, rng);
    in = cfg_.hidden_width;
  }
  layers_.emplace_back(in, cfg_.groups * cfg_.output_width, rng);
}

Tensor Encoder::forward(const Tensor& block) const {
  if (block.rank() != 2 || block.dim(1) != cfg_.input_width)
    throw ShapeError("encoder: expected [n," + std::to_string(cfg_.input_width) + "] block, got " +
                     shape_str(block.shape()));
  Tensor h = block;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) h = ops::gelu(layers_[l](h));
  h = layers_.back()(h);
  return ops::reshape(h, {block.dim(0), cfg_.groups, cfg_.output_width});
}

void Encoder::collect(ParameterSet& into, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].collect(into, prefix + ".fc" + std::to_string(l));
}

}  // namespace svtas
