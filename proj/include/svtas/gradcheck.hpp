#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svtas/tensor.hpp"

namespace svtas {

struct GradCheckRow {
  std::string name;
  std::size_t cases = 0;
  double worst_error = 0.0;  // largest relative error over all cases
  bool passed = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  std::size_t cases = 100;
  double tolerance = 1e-6;
  double step = 1e-5;
  // Composite blocks check this many random coordinates per parameter tensor.
  std::size_t coords_per_tensor = 3;
  // Substring filter on check names; empty runs everything.
  std::string filter;
};

// Compares backward() against central differences of the same scalar loss
// for one set of leaves. Leaves with more than max_coords entries are
// sampled. Returns the relative error over the checked coordinates.
double compare_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves, double step,
                         std::size_t max_coords, std::uint64_t sample_seed);

// Names of every check run_gradient_suite knows, kernels first.
std::vector<std::string> gradient_check_names();

// Random cases (shapes <= 8 per axis) for every kernel and model block.
std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& options,
                                             const std::function<void(const GradCheckRow&)>& on_row = {});

}  // namespace svtas
