#include "svtas/parameters.hpp"

#include <cmath>

namespace svtas {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / double(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor init_constant(Shape shape, double value) { return Tensor::filled(std::move(shape), value, true); }

void zero_grads(ParameterSet& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

void clear_grads(ParameterSet& params) {
  for (auto& [name, t] : params) t.clear_grad();
}

std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

std::vector<double> flat_grads(const ParameterSet& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for (const auto& [name, t] : params) {
    if (t.has_grad()) out.insert(out.end(), t.grad().begin(), t.grad().end());
    else out.insert(out.end(), t.numel(), 0.0);
  }
  return out;
}

std::vector<double> flat_values(const ParameterSet& params) {
  std::vector<double> out;
  out.reserve(parameter_count(params));
  for (const auto& [name, t] : params) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace svtas
