#include "svtas/agent.hpp"

#include <algorithm>
#include <cmath>

#include "svtas/error.hpp"

namespace svtas {

void AgentConfig::validate() const {
  if (classes < 2) throw ConfigError("agent: need at least 2 classes");
  if (input_width == 0 || refine_width == 0) throw ConfigError("agent: widths must be >= 1");
  if (refine_blocks > 16) throw ConfigError("agent: N2 above 16 is not supported");
}

Agent::Agent(const AgentConfig& cfg, Rng& rng) : cfg_(cfg), project_(cfg.input_width, cfg.classes, rng) {
  cfg_.validate();
  for (std::size_t b = 0; b < cfg_.refine_blocks; ++b)
    blocks_.push_back({nn::Conv1d(cfg_.classes, cfg_.refine_width, 3, std::size_t{1} << b, rng),
                       nn::Conv1d(cfg_.refine_width, cfg_.classes, 1, 1, rng)});
}

ActionLogits Agent::forward(const Tensor& state) const {
  if (state.rank() != 2 || state.dim(1) != cfg_.input_width)
    throw ShapeError("agent: expected [k," + std::to_string(cfg_.input_width) + "] state, got " +
                     shape_str(state.shape()));
  Tensor z = project_(state);
  for (const Block& b : blocks_) z = ops::add(z, b.pointwise(ops::gelu(b.dilated(z))));
  ActionLogits out;
  out.positions = state.dim(0);
  out.classes = cfg_.classes;
  out.probs = row_softmax(z.values(), cfg_.classes);
  out.logits = std::move(z);
  return out;
}

void Agent::collect(ParameterSet& into, const std::string& prefix) const {
  project_.collect(into, prefix + ".project");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].dilated.collect(into, prefix + ".refine" + std::to_string(b) + ".dilated");
    blocks_[b].pointwise.collect(into, prefix + ".refine" + std::to_string(b) + ".pointwise");
  }
}

std::vector<double> row_softmax(std::span<const double> logits, std::size_t classes) {
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r * classes < logits.size(); ++r) {
    const double* row = logits.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += (out[r * classes + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < classes; ++c) out[r * classes + c] /= z;
  }
  return out;
}

std::vector<int> argmax_rows(std::span<const double> rows, std::size_t classes) {
  std::vector<int> out(rows.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (rows[r * classes + c] > rows[r * classes + best]) best = c;
    out[r] = int(best);
  }
  return out;
}

std::vector<int> decide(const ActionLogits& logits, const ClipSpec& spec, std::size_t window_len) {
  return upsample_labels(argmax_rows(logits.logits.values(), logits.classes), spec, window_len);
}

}  // namespace svtas
