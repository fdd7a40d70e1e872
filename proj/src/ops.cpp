#include "svtas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "svtas/error.hpp"
#include "svtas/kernels.hpp"

namespace svtas::ops {
namespace {

using detail::grad_buffer;
using detail::Node;

[[noreturn]] void mismatch(const char* kernel, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(kernel) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

void require_rank(const char* kernel, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw ShapeError(std::string(kernel) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
}

bool wants(const Node& out, std::size_t i) {
  return out.inputs.size() > i && out.inputs[i] && out.inputs[i]->requires_grad;
}

template <typename Fn>
Tensor unary(const Tensor& x, Fn&& fn, std::function<void(Node&)> adjoint) {
  std::vector<double> out(x.numel());
  const auto xs = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(xs[i]);
  return make_result(x.shape(), std::move(out), {x}, std::move(adjoint));
}

// outer/len/inner decomposition around one axis
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  kernels::active().axpy(1.0, b.values().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (std::size_t i = 0; i < 2; ++i)
      if (wants(o, i)) kernels::active().axpy(1.0, o.grad.data(), grad_buffer(*o.inputs[i]).data(), o.grad.size());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("sub", a, b);
  std::vector<double> out(a.values().begin(), a.values().end());
  kernels::active().axpy(-1.0, b.values().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    if (wants(o, 0)) kernels::active().axpy(1.0, o.grad.data(), grad_buffer(*o.inputs[0]).data(), o.grad.size());
    if (wants(o, 1)) kernels::active().axpy(-1.0, o.grad.data(), grad_buffer(*o.inputs[1]).data(), o.grad.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a, b);
  std::vector<double> out(a.numel());
  kernels::active().mul(a.values().data(), b.values().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    const auto& k = kernels::active();
    if (wants(o, 0)) k.mul_acc(o.grad.data(), o.inputs[1]->data.data(), grad_buffer(*o.inputs[0]).data(), o.grad.size());
    if (wants(o, 1)) k.mul_acc(o.grad.data(), o.inputs[0]->data.data(), grad_buffer(*o.inputs[1]).data(), o.grad.size());
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_rank("add_row", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (row.numel() != d || row.rank() > 2 || (row.rank() == 2 && row.dim(0) != 1))
    mismatch("add_row", x, row);
  std::vector<double> out(x.values().begin(), x.values().end());
  const double* r = row.values().data();
  for (std::size_t i = 0; i < n; ++i) kernels::active().axpy(1.0, r, out.data() + i * d, d);
  return make_result(x.shape(), std::move(out), {x, row}, [n, d](Node& o) {
    const auto& k = kernels::active();
    if (wants(o, 0)) k.axpy(1.0, o.grad.data(), grad_buffer(*o.inputs[0]).data(), o.grad.size());
    if (wants(o, 1)) {
      double* g = grad_buffer(*o.inputs[1]).data();
      for (std::size_t i = 0; i < n; ++i) k.axpy(1.0, o.grad.data() + i * d, g, d);
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](Node& o) {
    kernels::active().axpy(s, o.grad.data(), grad_buffer(*o.inputs[0]).data(), o.grad.size());
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](Node& o) {
    kernels::active().axpy(1.0, o.grad.data(), grad_buffer(*o.inputs[0]).data(), o.grad.size());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) mismatch("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  kernels::active().gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    const auto& kt = kernels::active();
    // dA += dC B^T ; dB += A^T dC
    if (wants(o, 0)) kt.gemm_nt(m, k, n, o.grad.data(), o.inputs[1]->data.data(), grad_buffer(*o.inputs[0]).data());
    if (wants(o, 1)) kt.gemm_tn(k, n, m, o.inputs[0]->data.data(), o.grad.data(), grad_buffer(*o.inputs[1]).data());
  });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const auto xs = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xs[i * c + j];
  return make_result({c, r}, std::move(out), {x}, [r, c](Node& o) {
    auto& g = grad_buffer(*o.inputs[0]);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& o) {
    kernels::active().axpy(1.0, o.grad.data(), grad_buffer(*o.inputs[0]).data(), o.grad.size());
  });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t dilation,
              Padding padding) {
  require_rank("conv1d", x, 2);
  require_rank("conv1d", weight, 3);
  if (dilation == 0) throw ShapeError("conv1d: dilation must be >= 1");
  const std::size_t t_in = x.dim(0), c_in = x.dim(1);
  const std::size_t c_out = weight.dim(0), taps = weight.dim(2);
  if (weight.dim(1) != c_in) mismatch("conv1d", x, weight);
  if (bias.defined() && bias.numel() != c_out) mismatch("conv1d", weight, bias);
  if (padding == Padding::same && taps % 2 == 0)
    throw ShapeError("conv1d: same padding needs an odd kernel width, got " + std::to_string(taps));
  const std::size_t span = (taps - 1) * dilation;
  const long pad = padding == Padding::same ? static_cast<long>(span / 2) : 0L;
  if (padding == Padding::valid && span >= t_in)
    throw ShapeError("conv1d: input length " + std::to_string(t_in) + " shorter than receptive field " +
                     std::to_string(span + 1));
  const std::size_t t_out = padding == Padding::same ? t_in : t_in - span;

  // per-tap [C_in, C_out] matrices
  std::vector<double> tap_w(taps * c_in * c_out);
  const auto w = weight.values();
  for (std::size_t co = 0; co < c_out; ++co)
    for (std::size_t ci = 0; ci < c_in; ++ci)
      for (std::size_t j = 0; j < taps; ++j)
        tap_w[(j * c_in + ci) * c_out + co] = w[(co * c_in + ci) * taps + j];

  struct Range {
    std::size_t out_begin, in_begin, rows;
  };
  std::vector<Range> ranges(taps);
  for (std::size_t j = 0; j < taps; ++j) {
    const long offset = static_cast<long>(j * dilation) - pad;
    const long lo = std::max(0L, -offset);
    const long hi = std::min(static_cast<long>(t_out), static_cast<long>(t_in) - offset);
    ranges[j] = hi > lo ? Range{std::size_t(lo), std::size_t(lo + offset), std::size_t(hi - lo)}
                        : Range{0, 0, 0};
  }

  std::vector<double> out(t_out * c_out, 0.0);
  const auto& kt = kernels::active();
  const double* xs = x.values().data();
  for (std::size_t j = 0; j < taps; ++j)
    if (ranges[j].rows)
      kt.gemm_nn(ranges[j].rows, c_out, c_in, xs + ranges[j].in_begin * c_in,
                 tap_w.data() + j * c_in * c_out, out.data() + ranges[j].out_begin * c_out);
  if (bias.defined())
    for (std::size_t t = 0; t < t_out; ++t) kt.axpy(1.0, bias.values().data(), out.data() + t * c_out, c_out);

  return make_result(
      {t_out, c_out}, std::move(out), {x, weight, bias},
      [tap_w = std::move(tap_w), ranges = std::move(ranges), c_in, c_out, taps, t_out](Node& o) {
        const auto& k = kernels::active();
        if (wants(o, 0)) {
          double* gx = grad_buffer(*o.inputs[0]).data();
          for (std::size_t j = 0; j < taps; ++j)
            if (ranges[j].rows)
              k.gemm_nt(ranges[j].rows, c_in, c_out, o.grad.data() + ranges[j].out_begin * c_out,
                        tap_w.data() + j * c_in * c_out, gx + ranges[j].in_begin * c_in);
        }
        if (wants(o, 1)) {
          double* gw = grad_buffer(*o.inputs[1]).data();
          const double* xs = o.inputs[0]->data.data();
          std::vector<double> gtap(c_in * c_out);
          for (std::size_t j = 0; j < taps; ++j) {
            if (!ranges[j].rows) continue;
            std::fill(gtap.begin(), gtap.end(), 0.0);
            k.gemm_tn(c_in, c_out, ranges[j].rows, xs + ranges[j].in_begin * c_in,
                      o.grad.data() + ranges[j].out_begin * c_out, gtap.data());
            for (std::size_t ci = 0; ci < c_in; ++ci)
              for (std::size_t co = 0; co < c_out; ++co) gw[(co * c_in + ci) * taps + j] += gtap[ci * c_out + co];
          }
        }
        if (wants(o, 2)) {
          double* gb = grad_buffer(*o.inputs[2]).data();
          for (std::size_t t = 0; t < t_out; ++t) k.axpy(1.0, o.grad.data() + t * c_out, gb, c_out);
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](Node& o) {
    auto& g = grad_buffer(*o.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
  });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](Node& o) {
        auto& g = grad_buffer(*o.inputs[0]);
        const auto& xs = o.inputs[0]->data;
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xs[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
          g[i] += o.grad[i] * (cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v));
        }
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto xs = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t a = 0; a < s.outer; ++a)
    for (std::size_t c = 0; c < s.inner; ++c) {
      const std::size_t base = a * s.len * s.inner + c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.len; ++i) mx = std::max(mx, xs[base + i * s.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.len; ++i) z += (out[base + i * s.inner] = std::exp(xs[base + i * s.inner] - mx));
      for (std::size_t i = 0; i < s.len; ++i) out[base + i * s.inner] /= z;
    }
  return make_result(x.shape(), std::move(out), {x}, [s](Node& o) {
    auto& g = grad_buffer(*o.inputs[0]);
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t c = 0; c < s.inner; ++c) {
        const std::size_t base = a * s.len * s.inner + c;
        double dot = 0.0;
        for (std::size_t i = 0; i < s.len; ++i) dot += o.grad[base + i * s.inner] * o.data[base + i * s.inner];
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t at = base + i * s.inner;
          g[at] += o.data[at] * (o.grad[at] - dot);
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  if (gamma.defined() && gamma.numel() != d) mismatch("layer_norm", x, gamma);
  if (beta.defined() && beta.numel() != d) mismatch("layer_norm", x, beta);
  const auto xs = x.values();
  std::vector<double> xhat(x.numel()), inv_std(rows), out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= double(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= double(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * inv_std[r];
      xhat[r * d + i] = h;
      out[r * d + i] = h * (gamma.defined() ? gamma.values()[i] : 1.0) + (beta.defined() ? beta.values()[i] : 0.0);
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& o) {
        const Node* gnode = o.inputs[1].get();
        std::vector<double> dy(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = o.grad.data() + r * d;
          const double* h = xhat.data() + r * d;
          if (wants(o, 1)) {
            auto& gg = grad_buffer(*o.inputs[1]);
            for (std::size_t i = 0; i < d; ++i) gg[i] += go[i] * h[i];
          }
          if (wants(o, 2)) {
            auto& gb = grad_buffer(*o.inputs[2]);
            for (std::size_t i = 0; i < d; ++i) gb[i] += go[i];
          }
          if (!wants(o, 0)) continue;
          double mean_dy = 0.0, mean_dyh = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            dy[i] = go[i] * (gnode ? gnode->data[i] : 1.0);
            mean_dy += dy[i];
            mean_dyh += dy[i] * h[i];
          }
          mean_dy /= double(d);
          mean_dyh /= double(d);
          double* gx = grad_buffer(*o.inputs[0]).data() + r * d;
          for (std::size_t i = 0; i < d; ++i) gx[i] += inv_std[r] * (dy[i] - mean_dy - h[i] * mean_dyh);
        }
      });
}

Tensor mean(const Tensor& x, std::vector<std::size_t> axes) {
  const Shape& in = x.shape();
  std::vector<bool> reduce(in.size(), false);
  for (std::size_t a : axes) {
    if (a >= in.size())
      throw ShapeError("mean: axis " + std::to_string(a) + " out of range for " + shape_str(in));
    reduce[a] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (reduce[i]) count *= in[i];
    else out_shape.push_back(in[i]);
  }
  if (out_shape.empty()) out_shape = {1};

  // flat input index -> flat output index
  std::vector<std::size_t> target(x.numel());
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < target.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (!reduce[i]) o = o * in[i] + idx[i];
    target[flat] = o;
    for (std::size_t i = in.size(); i-- > 0;) {
      if (++idx[i] < in[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto xs = x.values();
  for (std::size_t i = 0; i < target.size(); ++i) out[target[i]] += xs[i];
  const double inv = 1.0 / double(count);
  for (double& v : out) v *= inv;
  return make_result(std::move(out_shape), std::move(out), {x}, [target = std::move(target), inv](Node& o) {
    auto& g = grad_buffer(*o.inputs[0]);
    for (std::size_t i = 0; i < target.size(); ++i) g[i] += o.grad[target[i]] * inv;
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](Node& o) {
    auto& g = grad_buffer(*o.inputs[0]);
    for (double& v : g) v += o.grad[0];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) mismatch("concat", parts.front(), p);
    for (std::size_t i = 0; i < first.size(); ++i)
      if (i != axis && p.dim(i) != first[i]) mismatch("concat", parts.front(), p);
    lens.push_back(p.dim(axis));
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto ps = parts[pi].values();
    const std::size_t chunk = lens[pi] * s.inner;
    for (std::size_t a = 0; a < s.outer; ++a)
      std::copy_n(ps.data() + a * chunk, chunk, out.data() + a * s.len * s.inner + offset * s.inner);
    offset += lens[pi];
  }
  return make_result(std::move(out_shape), std::move(out), parts, [s, lens = std::move(lens)](Node& o) {
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < lens.size(); ++pi) {
      const std::size_t chunk = lens[pi] * s.inner;
      if (wants(o, pi)) {
        auto& g = grad_buffer(*o.inputs[pi]);
        for (std::size_t a = 0; a < s.outer; ++a)
          kernels::active().axpy(1.0, o.grad.data() + a * s.len * s.inner + offset * s.inner,
                                 g.data() + a * chunk, chunk);
      }
      offset += lens[pi];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<double> out(shape_numel(out_shape));
  const auto xs = x.values();
  for (std::size_t a = 0; a < s.outer; ++a)
    std::copy_n(xs.data() + a * s.len * s.inner + begin * s.inner, chunk, out.data() + a * chunk);
  return make_result(std::move(out_shape), std::move(out), {x}, [s, begin, chunk](Node& o) {
    auto& g = grad_buffer(*o.inputs[0]);
    for (std::size_t a = 0; a < s.outer; ++a)
      kernels::active().axpy(1.0, o.grad.data() + a * chunk, g.data() + a * s.len * s.inner + begin * s.inner, chunk);
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask, double scale) {
  require_rank("attention", q, 2);
  require_rank("attention", k, 2);
  require_rank("attention", v, 2);
  const std::size_t n = q.dim(0), d = q.dim(1), m = k.dim(0), e = v.dim(1);
  if (k.dim(1) != d) mismatch("attention", q, k);
  if (v.dim(0) != m) mismatch("attention", k, v);
  if (mask.defined() && (mask.rank() != 2 || mask.dim(0) != n || mask.dim(1) != m)) mismatch("attention", q, mask);
  const auto& kt = kernels::active();

  std::vector<double> probs(n * m, 0.0);
  kt.gemm_nt(n, m, d, q.values().data(), k.values().data(), probs.data());
  for (std::size_t i = 0; i < n; ++i) {
    double* row = probs.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = row[j] * scale + (mask.defined() ? mask.values()[i * m + j] : 0.0);
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < m; ++j) row[j] /= z;
  }
  std::vector<double> out(n * e, 0.0);
  kt.gemm_nn(n, e, m, probs.data(), v.values().data(), out.data());

  return make_result({n, e}, std::move(out), {q, k, v}, [probs = std::move(probs), n, d, m, e, scale](Node& o) {
    const auto& kk = kernels::active();
    const double* qs = o.inputs[0]->data.data();
    const double* ks = o.inputs[1]->data.data();
    const double* vs = o.inputs[2]->data.data();
    if (wants(o, 2)) kk.gemm_tn(m, e, n, probs.data(), o.grad.data(), grad_buffer(*o.inputs[2]).data());
    if (!wants(o, 0) && !wants(o, 1)) return;
    std::vector<double> dscore(n * m, 0.0);
    kk.gemm_nt(n, m, e, o.grad.data(), vs, dscore.data());
    for (std::size_t i = 0; i < n; ++i) {
      double* row = dscore.data() + i * m;
      const double* p = probs.data() + i * m;
      const double dot = kk.dot(row, p, m);
      for (std::size_t j = 0; j < m; ++j) row[j] = scale * p[j] * (row[j] - dot);
    }
    if (wants(o, 0)) kk.gemm_nn(n, d, m, dscore.data(), ks, grad_buffer(*o.inputs[0]).data());
    if (wants(o, 1)) kk.gemm_tn(m, d, n, dscore.data(), qs, grad_buffer(*o.inputs[1]).data());
  });
}

Tensor rotary(const Tensor& x, std::size_t heads, std::size_t offset, double base) {
  require_rank("rotary", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0 || (d / heads) % 2 != 0)
    throw ShapeError("rotary: width " + std::to_string(d) + " does not split into " + std::to_string(heads) +
                     " even-width heads");
  const std::size_t hd = d / heads, pairs = hd / 2;
  std::vector<double> cs(n * pairs), sn(n * pairs);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < pairs; ++i) {
      const double angle = double(t + offset) * std::pow(base, -2.0 * double(i) / double(hd));
      cs[t * pairs + i] = std::cos(angle);
      sn[t * pairs + i] = std::sin(angle);
    }
  const auto xs = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < pairs; ++i) {
        const std::size_t a = t * d + h * hd + 2 * i;
        const double c = cs[t * pairs + i], s = sn[t * pairs + i];
        out[a] = xs[a] * c - xs[a + 1] * s;
        out[a + 1] = xs[a] * s + xs[a + 1] * c;
      }
  return make_result(x.shape(), std::move(out), {x},
                     [cs = std::move(cs), sn = std::move(sn), n, d, heads, hd, pairs](Node& o) {
                       auto& g = grad_buffer(*o.inputs[0]);
                       for (std::size_t t = 0; t < n; ++t)
                         for (std::size_t h = 0; h < heads; ++h)
                           for (std::size_t i = 0; i < pairs; ++i) {
                             const std::size_t a = t * d + h * hd + 2 * i;
                             const double c = cs[t * pairs + i], s = sn[t * pairs + i];
                             g[a] += o.grad[a] * c + o.grad[a + 1] * s;
                             g[a + 1] += -o.grad[a] * s + o.grad[a + 1] * c;
                           }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, double normalizer, double prob_floor) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  if (!(normalizer > 0.0)) throw ShapeError("cross_entropy: normalizer must be positive");
  const auto xs = logits.values();
  std::vector<double> probs(n * c);
  std::vector<int> target(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= c)
      throw ShapeError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0," + std::to_string(c) + ")");
    const double* row = xs.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    loss -= std::log(std::max(probs[i * c + std::size_t(labels[i])], prob_floor));
  }
  loss /= normalizer;
  return make_result({1}, {loss}, {logits},
                     [probs = std::move(probs), target = std::move(target), n, c, normalizer, prob_floor](Node& o) {
                       auto& g = grad_buffer(*o.inputs[0]);
                       const double s = o.grad[0] / normalizer;
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t y = std::size_t(target[i]);
                         if (probs[i * c + y] < prob_floor) continue;  // clamped: locally constant
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += s * (probs[i * c + j] - (j == y ? 1.0 : 0.0));
                       }
                     });
}

}  // namespace svtas::ops
