#pragma once

#include <cstdint>
#include <filesystem>

#include "svtas/agent.hpp"
#include "svtas/config.hpp"
#include "svtas/encoder.hpp"
#include "svtas/hbrt.hpp"
#include "svtas/stream.hpp"

namespace svtas {

// Observation model (encoder + HBRT, the phi parameters) and agent (theta)
// for one streaming segmenter.
class Model {
 public:
  Model(ModelConfig cfg, std::size_t input_width, std::size_t classes, std::uint64_t seed);

  struct ClipStep {
    Tensor features;  // f_j [k, D]
    Tensor state;     // s_j [k, D]
    ActionLogits action;
    MemoryBank memory;  // m_{j+1}, detached
  };

  ClipStep step(const FeatureStream& stream, const Clip& clip, const MemoryBank& memory) const;
  Tensor encode_clip(const FeatureStream& stream, const Clip& clip) const;
  MemoryBank initial_memory() const { return MemoryBank::zeros(cfg_.hbrt); }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const Encoder& encoder() const { return encoder_; }
  const Hbrt& hbrt() const { return hbrt_; }
  const Agent& agent() const { return agent_; }

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  Hbrt hbrt_;
  Agent agent_;
  ParameterSet params_;
};

// "SVCK", u32 version=1, u32 count, then per tensor (name order): u16 name
// length, name, u8 rank, u32 dims, float32 payload.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path);
// Copies checkpoint values into matching parameters; names and shapes must agree.
void load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

}  // namespace svtas
