#include "svtas/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "svtas/error.hpp"

namespace svtas {
namespace {

std::atomic<std::uint64_t> next_seq{1};
thread_local bool recording = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ShapeError("tensor: use of an undefined tensor");
  return *node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& detail::grad_buffer(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_node({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size())
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::values() const { return checked(node_).data; }

std::span<double> Tensor::mutable_values() {
  checked(node_);
  if (node_->backward) throw ShapeError("tensor: cannot write into a recorded intermediate");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const Shape& s = shape();
  if (s.size() != 2) throw ShapeError("tensor: at(row, col) on shape " + shape_str(s));
  return node_->data[row * s[1] + col];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  checked(node_);
  if (node_->backward && !on) throw ShapeError("tensor: cannot turn off grad on an intermediate");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return !checked(node_).backward; }

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ShapeError("tensor: gradient requested before backward()");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  checked(node_);
  return detail::grad_buffer(*node_);
}

void Tensor::zero_grad() {
  checked(node_);
  auto& g = detail::grad_buffer(*node_);
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::clear_grad() {
  checked(node_);
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
  const detail::Node& n = checked(node_);
  return Tensor(new_node(n.shape, n.data, false));
}

std::uint64_t Tensor::id() const { return checked(node_).seq; }

bool grad_enabled() { return recording; }

NoGradGuard::NoGradGuard() : previous_(recording) { recording = false; }
NoGradGuard::~NoGradGuard() { recording = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> adjoint) {
  bool needs = false;
  if (recording)
    for (const Tensor& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  auto node = new_node(std::move(shape), std::move(data), needs);
  if (needs) {
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(adjoint);
  }
  return Tensor(std::move(node));
}

std::vector<detail::Node*> reverse_topological(const Tensor& root) {
  std::vector<detail::Node*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs)
      if (in && in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
  return order;
}

std::size_t backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw ShapeError("backward: root must be a scalar, got " +
                     (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  if (!root.requires_grad()) return 0;
  const auto order = reverse_topological(root);
  detail::grad_buffer(*root.node())[0] += 1.0;
  for (detail::Node* n : order)
    if (n->backward && !n->grad.empty()) n->backward(*n);
  return order.size();
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, Tensor x,
                                  double h) {
  NoGradGuard no_grad;
  std::span<double> xs = x.node()->data;
  std::vector<double> g(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double saved = xs[i];
    xs[i] = saved + h;
    const double plus = f(x);
    xs[i] = saved - h;
    const double minus = f(x);
    xs[i] = saved;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return Tensor::from(x.shape(), std::move(g));
}

std::vector<double> finite_difference_coordinates(const std::function<double(const Tensor&)>& f, Tensor x,
                                                  std::span<const std::size_t> coords, double h) {
  NoGradGuard no_grad;
  std::span<double> xs = x.node()->data;
  std::vector<double> g;
  g.reserve(coords.size());
  for (std::size_t i : coords) {
    const double saved = xs[i];
    xs[i] = saved + h;
    const double plus = f(x);
    xs[i] = saved - h;
    const double minus = f(x);
    xs[i] = saved;
    g.push_back((plus - minus) / (2.0 * h));
  }
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

void require_finite(const Tensor& t, const std::string& where) {
  for (double v : t.values())
    if (!std::isfinite(v)) throw NumericalError(where + ": non-finite value in " + shape_str(t.shape()));
}

}  // namespace svtas
