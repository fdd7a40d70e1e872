#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svtas/parameters.hpp"

namespace svtas {

struct AdamWConfig {
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay: the parameter shrinks by lr*wd before
// the bias-corrected moment step.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // Every parameter must hold a gradient; throws naming the first that does not.
  void step(ParameterSet& params);

  std::uint64_t steps() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<double>& first_moment(const std::string& name) const;
  const std::vector<double>& second_moment(const std::string& name) const;

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace svtas
