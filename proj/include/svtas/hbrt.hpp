#pragma once

#include <utility>
#include <vector>

#include "svtas/nn.hpp"

namespace svtas {

struct HbrtConfig {
  std::size_t layers = 4;     // N1
  std::size_t width = 128;    // D
  std::size_t memory = 512;   // M; 0 disables the recurrent memory
  std::size_t heads = 1;
  std::size_t window = 16;    // attention window w, in dilated steps
  std::size_t ffn_mult = 2;

  void validate() const;
  std::size_t dilation(std::size_t layer) const { return std::size_t{1} << layer; }
};

// Per-layer recurrent history: `layers` tensors of [M, D], all zeros at the
// start of a stream. With M = 0 the entries are undefined tensors.
struct MemoryBank {
  std::vector<Tensor> layers;
  std::size_t length = 0;
  std::size_t clips_seen = 0;

  static MemoryBank zeros(const HbrtConfig& cfg);
  // Copies values into fresh leaves so no graph spans two clips.
  MemoryBank detached() const;
};

// Additive [k, k] mask: query i sees key t iff t <= i, (i - t) % 2^o == 0 and
// (i - t) < window * 2^o. Allowed entries 0, others -1e30.
Tensor dilated_window_mask(std::size_t positions, std::size_t layer, std::size_t window);

// One HBRTB layer: dilated conv, masked self-attention plus memory
// cross-attention, feed-forward, and the gated memory write.
class HbrtLayer {
 public:
  HbrtLayer() = default;
  HbrtLayer(const HbrtConfig& cfg, std::size_t index, Rng& rng);

  // x: [k, D]; memory: [M, D] or undefined when M = 0. Returns (y, memory').
  std::pair<Tensor, Tensor> forward(const Tensor& x, const Tensor& memory) const;
  void collect(ParameterSet& into, const std::string& prefix) const;
  std::size_t index() const { return index_; }

 private:
  HbrtConfig cfg_;
  std::size_t index_ = 0;
  nn::Conv1d conv_;
  nn::LayerNorm norm_attn_, norm_ffn_;
  nn::Linear q_, k_, v_;                   // self-attention
  nn::Linear read_q_, read_k_, read_v_;    // memory read
  nn::Linear out_;                         // shared output projection
  nn::Linear ffn_in_, ffn_out_;
  nn::Linear gate_current_, gate_memory_;  // gate from pooled state and old memory
  nn::Linear write_q_, write_k_, write_v_, candidate_;
};

class Hbrt {
 public:
  Hbrt() = default;
  Hbrt(const HbrtConfig& cfg, Rng& rng);

  // Layer o reads bank.layers[o] and emits its update. The returned bank is
  // detached and its clip counter advanced.
  std::pair<Tensor, MemoryBank> forward(const Tensor& features, const MemoryBank& bank) const;
  // Same, but memory outputs stay attached to the graph.
  std::pair<Tensor, std::vector<Tensor>> forward_attached(const Tensor& features, const MemoryBank& bank) const;

  void collect(ParameterSet& into, const std::string& prefix) const;
  const HbrtConfig& config() const { return cfg_; }
  const HbrtLayer& layer(std::size_t o) const { return layers_.at(o); }

 private:
  HbrtConfig cfg_;
  std::vector<HbrtLayer> layers_;
};

}  // namespace svtas
