#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svtas/tensor.hpp"

// Differentiable kernels. Every function records an exact adjoint when an
// input requires grad; shape mismatches throw ShapeError naming the kernel.
namespace svtas::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[n, d] + row[d] broadcast over the leading axis (row may be [d] or [1, d]).
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

// [m, k] x [k, n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

enum class Padding {
  valid,  // no padding; output length T - (K-1)*dilation
  same,   // zero padding (K-1)/2*dilation on both sides; K must be odd
};

// x: [T, C_in] (time-major), weight: [C_out, C_in, K], bias: [C_out] or
// undefined. Output [T', C_out] with out[t] = sum_j W[:, :, j] x[t + j*dil - pad].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t dilation,
              Padding padding);

Tensor sigmoid(const Tensor& x);
// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis. gamma/beta may be undefined (no affine).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Mean over the listed axes; they are removed from the shape. Reducing every
// axis yields shape [1].
Tensor mean(const Tensor& x, std::vector<std::size_t> axes);
Tensor sum(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

// softmax(scale * q k^T + mask) v with q [n, d], k [m, d], v [m, e]. The
// additive mask [n, m] (0 or a large negative) is a constant; undefined means
// no mask.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                 double scale);

// Rotary position encoding on x [n, d] split into `heads` chunks of even
// width; row t is rotated by angle (t + offset) * base^(-2i/head_dim) in pair i.
Tensor rotary(const Tensor& x, std::size_t heads, std::size_t offset = 0, double base = 10000.0);

// -(1/normalizer) * sum_i log(max(softmax(logits_i)[labels_i], prob_floor)).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, double normalizer,
                     double prob_floor = 1e-12);

}  // namespace svtas::ops
