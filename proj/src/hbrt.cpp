#include "svtas/hbrt.hpp"

#include "svtas/error.hpp"

namespace svtas {

void HbrtConfig::validate() const {
  if (layers == 0) throw ConfigError("hbrt: N1 must be >= 1");
  if (layers > 16) throw ConfigError("hbrt: N1 above 16 gives dilations beyond any clip");
  if (width == 0 || heads == 0 || width % heads != 0 || (width / heads) % 2 != 0)
    throw ConfigError("hbrt: width must split into heads of even width (rotary pairs)");
  if (window == 0) throw ConfigError("hbrt: window must be >= 1");
  if (ffn_mult == 0) throw ConfigError("hbrt: ffn_mult must be >= 1");
}

MemoryBank MemoryBank::zeros(const HbrtConfig& cfg) {
  MemoryBank bank;
  bank.length = cfg.memory;
  bank.layers.resize(cfg.layers);
  if (cfg.memory > 0)
    for (Tensor& t : bank.layers) t = Tensor::zeros({cfg.memory, cfg.width});
  return bank;
}

MemoryBank MemoryBank::detached() const {
  MemoryBank out;
  out.length = length;
  out.clips_seen = clips_seen;
  out.layers.reserve(layers.size());
  for (const Tensor& t : layers) out.layers.push_back(t.defined() ? t.detach() : Tensor{});
  return out;
}

Tensor dilated_window_mask(std::size_t positions, std::size_t layer, std::size_t window) {
  const std::size_t stride = std::size_t{1} << layer;
  std::vector<double> mask(positions * positions, -1e30);
  for (std::size_t i = 0; i < positions; ++i)
    for (std::size_t t = 0; t <= i; ++t) {
      const std::size_t gap = i - t;
      if (gap % stride == 0 && gap < window * stride) mask[i * positions + t] = 0.0;
    }
  return Tensor::from({positions, positions}, std::move(mask));
}

HbrtLayer::HbrtLayer(const HbrtConfig& cfg, std::size_t index, Rng& rng) : cfg_(cfg), index_(index) {
  const std::size_t d = cfg.width, f = cfg.width * cfg.ffn_mult;
  conv_ = nn::Conv1d(d, d, 3, cfg.dilation(index), rng);
  norm_attn_ = nn::LayerNorm(d);
  norm_ffn_ = nn::LayerNorm(d);
  q_ = nn::Linear(d, d, rng);
  k_ = nn::Linear(d, d, rng);
  v_ = nn::Linear(d, d, rng);
  read_q_ = nn::Linear(d, d, rng);
  read_k_ = nn::Linear(d, d, rng);
  read_v_ = nn::Linear(d, d, rng);
  out_ = nn::Linear(d, d, rng);
  ffn_in_ = nn::Linear(d, f, rng);
  ffn_out_ = nn::Linear(f, d, rng);
  gate_current_ = nn::Linear(d, d, rng);
  gate_memory_ = nn::Linear(d, d, rng, false);
  write_q_ = nn::Linear(d, d, rng);
  write_k_ = nn::Linear(d, d, rng);
  write_v_ = nn::Linear(d, d, rng);
  candidate_ = nn::Linear(d, d, rng);
}

std::pair<Tensor, Tensor> HbrtLayer::forward(const Tensor& x, const Tensor& memory) const {
  const std::size_t d = cfg_.width;
  if (x.rank() != 2 || x.dim(1) != d)
    throw ShapeError("hbrtb: expected [k," + std::to_string(d) + "] input, got " + shape_str(x.shape()));
  const bool with_memory = memory.defined();
  if (with_memory && (memory.rank() != 2 || memory.dim(1) != d))
    throw ShapeError("hbrtb: memory " + shape_str(memory.shape()) + " does not match width " + std::to_string(d));
  const std::size_t k = x.dim(0);

  // (1) dilated temporal smoothing
  const Tensor smoothed = ops::add(x, conv_(x));

  // (2) windowed self-attention with rotary positions, plus memory read
  const Tensor a = norm_attn_(smoothed);
  const Tensor mask = dilated_window_mask(k, index_, cfg_.window);
  Tensor mixed = nn::multi_head_attention(ops::rotary(q_(a), cfg_.heads), ops::rotary(k_(a), cfg_.heads), v_(a),
                                          mask, cfg_.heads);
  if (with_memory)
    mixed = ops::add(mixed, nn::multi_head_attention(read_q_(a), read_k_(memory), read_v_(memory), Tensor{},
                                                     cfg_.heads));
  const Tensor attended = ops::add(smoothed, out_(mixed));

  // (3) position-wise feed-forward
  const Tensor y = ops::add(attended, ffn_out_(ops::gelu(ffn_in_(norm_ffn_(attended)))));
  if (!with_memory) return {y, Tensor{}};

  // (4) gated write: memory slots attend to the current clip
  const Tensor pooled = ops::reshape(ops::mean(y, {0}), {1, d});
  const Tensor gate = ops::sigmoid(ops::add_row(gate_memory_(memory), gate_current_(pooled)));
  const Tensor written = nn::multi_head_attention(write_q_(memory), write_k_(y), write_v_(y), Tensor{}, cfg_.heads);
  const Tensor candidate = candidate_(written);
  const Tensor next = ops::add(memory, ops::mul(gate, ops::sub(candidate, memory)));
  return {y, next};
}

void HbrtLayer::collect(ParameterSet& into, const std::string& prefix) const {
  conv_.collect(into, prefix + ".conv");
  norm_attn_.collect(into, prefix + ".norm_attn");
  norm_ffn_.collect(into, prefix + ".norm_ffn");
  q_.collect(into, prefix + ".self_q");
  k_.collect(into, prefix + ".self_k");
  v_.collect(into, prefix + ".self_v");
  read_q_.collect(into, prefix + ".read_q");
  read_k_.collect(into, prefix + ".read_k");
  read_v_.collect(into, prefix + ".read_v");
  out_.collect(into, prefix + ".attn_out");
  ffn_in_.collect(into, prefix + ".ffn_in");
  ffn_out_.collect(into, prefix + ".ffn_out");
  gate_current_.collect(into, prefix + ".gate_current");
  gate_memory_.collect(into, prefix + ".gate_memory");
  write_q_.collect(into, prefix + ".write_q");
  write_k_.collect(into, prefix + ".write_k");
  write_v_.collect(into, prefix + ".write_v");
  candidate_.collect(into, prefix + ".candidate");
}

Hbrt::Hbrt(const HbrtConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t o = 0; o < cfg_.layers; ++o) layers_.emplace_back(cfg_, o, rng);
}

std::pair<Tensor, std::vector<Tensor>> Hbrt::forward_attached(const Tensor& features, const MemoryBank& bank) const {
  if (bank.layers.size() != layers_.size())
    throw ShapeError("hbrt: memory bank has " + std::to_string(bank.layers.size()) + " layers, model has " +
                     std::to_string(layers_.size()));
  if (bank.length != cfg_.memory)
    throw ShapeError("hbrt: memory bank length " + std::to_string(bank.length) + " differs from M=" +
                     std::to_string(cfg_.memory));
  Tensor h = features;
  std::vector<Tensor> next(layers_.size());
  for (std::size_t o = 0; o < layers_.size(); ++o) std::tie(h, next[o]) = layers_[o].forward(h, bank.layers[o]);
  return {h, std::move(next)};
}

std::pair<Tensor, MemoryBank> Hbrt::forward(const Tensor& features, const MemoryBank& bank) const {
  auto [state, next] = forward_attached(features, bank);
  MemoryBank out;
  out.length = bank.length;
  out.clips_seen = bank.clips_seen + 1;
  out.layers.reserve(next.size());
  for (const Tensor& t : next) out.layers.push_back(t.defined() ? t.detach() : Tensor{});
  return {state, std::move(out)};
}

void Hbrt::collect(ParameterSet& into, const std::string& prefix) const {
  for (std::size_t o = 0; o < layers_.size(); ++o) layers_[o].collect(into, prefix + ".layer" + std::to_string(o));
}

}  // namespace svtas
