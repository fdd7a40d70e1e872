#pragma once

#include "svtas/nn.hpp"
#include "svtas/stream.hpp"

namespace svtas {

struct AgentConfig {
  std::size_t refine_blocks = 4;  // N2
  std::size_t classes = 2;        // C
  std::size_t input_width = 128;  // D
  std::size_t refine_width = 32;  // hidden channels inside a refinement block

  void validate() const;
};

// Per-clip decision: logits [k, C] (attached to the graph) and the detached
// per-position class probabilities.
struct ActionLogits {
  Tensor logits;
  std::vector<double> probs;  // k x C, rows sum to 1
  std::size_t positions = 0;
  std::size_t classes = 0;
};

// Linear projection to class scores followed by N2 residual refinement
// blocks (dilated conv 2^b, GELU, 1x1 conv) over the logit sequence.
class Agent {
 public:
  Agent() = default;
  Agent(const AgentConfig& cfg, Rng& rng);

  ActionLogits forward(const Tensor& state) const;
  void collect(ParameterSet& into, const std::string& prefix) const;
  const AgentConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::Conv1d dilated;
    nn::Conv1d pointwise;
  };
  AgentConfig cfg_;
  nn::Linear project_;
  std::vector<Block> blocks_;
};

// Row-wise softmax of a [k, C] value block.
std::vector<double> row_softmax(std::span<const double> logits, std::size_t classes);

// Per-position argmax; ties go to the lowest class id.
std::vector<int> argmax_rows(std::span<const double> rows, std::size_t classes);

// argmax per sampled position, expanded to window_len frames.
std::vector<int> decide(const ActionLogits& logits, const ClipSpec& spec, std::size_t window_len);

}  // namespace svtas
