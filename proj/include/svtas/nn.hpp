#pragma once

#include <string>

#include "svtas/ops.hpp"
#include "svtas/parameters.hpp"

namespace svtas::nn {

// y = x W + b with W [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when built without bias

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& into, const std::string& prefix) const;
};

// Temporal convolution over [T, C_in] with weight [C_out, C_in, K], zero "same" padding.
struct Conv1d {
  Tensor weight;
  Tensor bias;
  std::size_t dilation = 1;

  Conv1d() = default;
  Conv1d(std::size_t c_in, std::size_t c_out, std::size_t taps, std::size_t dilation, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterSet& into, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);
  Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, 1e-5); }
  void collect(ParameterSet& into, const std::string& prefix) const;
};

// Splits the last axis of q/k/v into `heads` chunks, attends per head and
// concatenates the results.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                            std::size_t heads);

}  // namespace svtas::nn
