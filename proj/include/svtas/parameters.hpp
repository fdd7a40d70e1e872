#pragma once

#include <map>
#include <string>

#include "svtas/random.hpp"
#include "svtas/tensor.hpp"

namespace svtas {

// Trainable tensors keyed by dotted path; iteration order is lexicographic,
// which is also the checkpoint order.
using ParameterSet = std::map<std::string, Tensor>;

// Uniform in +-sqrt(1/fan_in), requires_grad on.
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor init_constant(Shape shape, double value);

void zero_grads(ParameterSet& params);
void clear_grads(ParameterSet& params);
std::size_t parameter_count(const ParameterSet& params);
// Flattened gradients in map order; missing gradients contribute zeros.
std::vector<double> flat_grads(const ParameterSet& params);
std::vector<double> flat_values(const ParameterSet& params);

}  // namespace svtas
