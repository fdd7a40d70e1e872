#include "svtas/optim.hpp"

#include <cmath>

#include "svtas/error.hpp"

namespace svtas {

void AdamW::step(ParameterSet& params) {
  for (const auto& [name, t] : params)
    if (!t.has_grad()) throw NumericalError("adamw: parameter '" + name + "' has no gradient");
  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, double(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, double(step_));
  for (auto& [name, t] : params) {
    Moments& mom = moments_[name];
    if (mom.m.empty()) {
      mom.m.assign(t.numel(), 0.0);
      mom.v.assign(t.numel(), 0.0);
    }
    const auto g = t.grad();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / c1;
      const double vhat = mom.v[i] / c2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

const std::vector<double>& AdamW::first_moment(const std::string& name) const { return moments_.at(name).m; }
const std::vector<double>& AdamW::second_moment(const std::string& name) const { return moments_.at(name).v; }

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params)
      if (t.has_grad())
        for (double& g : t.mutable_grad()) g *= s;
  }
  return norm;
}

}  // namespace svtas
