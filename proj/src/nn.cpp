#include "svtas/nn.hpp"

#include <cmath>

#include "svtas/error.hpp"

namespace svtas::nn {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(init_uniform({in, out}, in, rng)) {
  if (with_bias) bias = init_constant({out}, 0.0);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ops::matmul(x, weight);
  return bias.defined() ? ops::add_row(y, bias) : y;
}

void Linear::collect(ParameterSet& into, const std::string& prefix) const {
  into[prefix + ".weight"] = weight;
  if (bias.defined()) into[prefix + ".bias"] = bias;
}

Conv1d::Conv1d(std::size_t c_in, std::size_t c_out, std::size_t taps, std::size_t dil, Rng& rng)
    : weight(init_uniform({c_out, c_in, taps}, c_in * taps, rng)), bias(init_constant({c_out}, 0.0)), dilation(dil) {}

Tensor Conv1d::operator()(const Tensor& x) const {
  return ops::conv1d(x, weight, bias, dilation, ops::Padding::same);
}

void Conv1d::collect(ParameterSet& into, const std::string& prefix) const {
  into[prefix + ".weight"] = weight;
  into[prefix + ".bias"] = bias;
}

LayerNorm::LayerNorm(std::size_t width) : gamma(init_constant({width}, 1.0)), beta(init_constant({width}, 0.0)) {}

void LayerNorm::collect(ParameterSet& into, const std::string& prefix) const {
  into[prefix + ".gamma"] = gamma;
  into[prefix + ".beta"] = beta;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                            std::size_t heads) {
  const std::size_t width = q.dim(1);
  if (heads == 0 || width % heads != 0 || k.dim(1) != width || v.dim(1) != width)
    throw ShapeError("multi_head_attention: width " + std::to_string(width) + " not divisible into " +
                     std::to_string(heads) + " heads");
  const std::size_t hd = width / heads;
  const double scale = 1.0 / std::sqrt(double(hd));
  if (heads == 1) return ops::attention(q, k, v, mask, scale);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * hd, e = b + hd;
    outs.push_back(ops::attention(ops::slice(q, 1, b, e), ops::slice(k, 1, b, e), ops::slice(v, 1, b, e), mask, scale));
  }
  return ops::concat(outs, 1);
}

}  // namespace svtas::nn
