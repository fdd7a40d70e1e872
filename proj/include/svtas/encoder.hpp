#pragma once

#include "svtas/nn.hpp"

namespace svtas {

struct EncoderConfig {
  std::size_t input_width = 16;   // D_in
  std::size_t hidden_width = 64;
  std::size_t output_width = 128;  // model width D
  std::size_t groups = 2;          // pooled "spatial" groups per position
  std::size_t layers = 2;

  void validate() const;
};

// Position-wise perceptron standing in for the video encoder. Maps a block
// [n, D_in] to [n, groups, D]; no mixing across positions.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& block) const;
  void collect(ParameterSet& into, const std::string& prefix) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<nn::Linear> layers_;
};

}  // namespace svtas
