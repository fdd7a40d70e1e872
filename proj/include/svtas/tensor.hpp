#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace svtas {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first backward touches this node
  bool requires_grad = false;
  std::uint64_t seq = 0;     // creation order; inputs always have a smaller seq
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into inputs
};

std::vector<double>& grad_buffer(Node& node);

}  // namespace detail

// Handle to a dense row-major tensor of doubles. Copies share storage; use
// clone() or detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable storage. Only leaves may be written; mutating a recorded
  // intermediate would silently break its adjoint.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();  // allocates the buffer if absent
  void clear_grad();

  // Same values, no history, requires_grad off.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  std::uint64_t id() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- graph control -------------------------------------------------------

bool grad_enabled();

// Disables recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Nodes reachable from a root, in reverse creation order. This is the order
// backward() visits them; each node appears once.
std::vector<detail::Node*> reverse_topological(const Tensor& root);

// Writes d(root)/d(leaf) into every reachable leaf with requires_grad.
// Gradients accumulate across calls. Returns the number of nodes visited.
std::size_t backward(const Tensor& root);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate
// of x. x is perturbed in place and restored.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, Tensor x,
                                  double h = 1e-5);

// Central differences for the listed coordinates only.
std::vector<double> finite_difference_coordinates(const std::function<double(const Tensor&)>& f, Tensor x,
                                                  std::span<const std::size_t> coords, double h = 1e-5);

// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|); zero when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

// Throws NumericalError naming `where` when any value is NaN or infinite.
void require_finite(const Tensor& t, const std::string& where);

// Builds an op result. When recording is on and any input requires grad the
// result is attached to the graph with the given adjoint.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> adjoint);

}  // namespace svtas
