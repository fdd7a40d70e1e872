#pragma once

#include <vector>

#include "svtas/random.hpp"
#include "svtas/stream.hpp"
#include "svtas/tensor.hpp"

namespace svtas::test {

inline Tensor randn(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

inline FeatureStream random_stream(Rng& rng, std::size_t frames, std::size_t width, std::size_t classes) {
  FeatureStream s;
  s.id = "s";
  s.frames = frames;
  s.width = width;
  s.classes = classes;
  for (std::size_t i = 0; i < frames * width; ++i) s.features.push_back(rng.normal());
  for (std::size_t i = 0; i < frames; ++i) s.labels.push_back(int(rng.uniform_int(0, std::int64_t(classes) - 1)));
  return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace svtas::test
