#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "svtas/agent.hpp"
#include "svtas/encoder.hpp"
#include "svtas/hbrt.hpp"
#include "svtas/optim.hpp"
#include "svtas/reward.hpp"
#include "svtas/stream.hpp"

namespace svtas {

enum class Paradigm { clustering, sequential };
enum class TrainMode { supervised, mc, td };
// per_class: 1/(k*C), averaging over positions and classes; mean: 1/k
enum class CeNormalization { per_class, mean };

struct ModelConfig {
  ClipSpec clip{64, 2};
  Paradigm paradigm = Paradigm::clustering;
  std::size_t sequential_half_width = 0;  // 0 selects ceil(k*p/2)
  EncoderConfig encoder;
  HbrtConfig hbrt;
  AgentConfig agent;

  // Widths that must agree across blocks are taken from hbrt.width and the
  // dataset (input width, class count).
  void finalize(std::size_t input_width, std::size_t classes);
  std::size_t half_width() const;
};

struct TrainerConfig {
  TrainMode mode = TrainMode::supervised;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  AdamWConfig optim;
  double grad_clip = 10.0;  // 0 disables
  RewardConfig reward;
  CeNormalization ce_norm = CeNormalization::per_class;
  double prob_floor = 1e-12;
};

struct DataConfig {
  std::filesystem::path dataset;
  std::filesystem::path output;
};

struct Config {
  ModelConfig model;
  TrainerConfig train;
  DataConfig data;
};

// key=value lines under [model], [reward], [train], [data]; '#' comments.
// `profile = gtea` under [model] sets k=64, p=2. Unknown keys and sections
// throw ConfigError.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
// Applies one "section.key=value" override (the CLI's --set flag).
void apply_override(Config& cfg, const std::string& assignment);
std::string to_string(TrainMode mode);
TrainMode parse_mode(const std::string& text);

}  // namespace svtas
