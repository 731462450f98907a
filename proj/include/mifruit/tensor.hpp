#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mifruit/error.hpp"

namespace mifruit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

/// Row-major flat offset of (n, c, h, w) in an NCHW tensor.
constexpr std::size_t nchw_index(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                                 std::size_t C, std::size_t H, std::size_t W) {
  return ((n * C + c) * H + h) * W + w;
}

namespace detail {

template <typename T>
struct Node;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> producer;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

/// One recorded operation. The backward rule receives the gradient of the
/// output and accumulates into the inputs that require it.
template <typename T>
struct Node {
  const char* op = "";
  std::vector<ImplPtr<T>> inputs;
  std::function<void(std::span<const T>)> backward;
  bool consumed = false;
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on this thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense row-major array with an optional gradient buffer. Copies share the
/// underlying storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    for (auto d : shape) require(d > 0, "tensor dimensions must be positive: " + shape_str(shape));
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    for (auto d : shape) require(d > 0, "tensor dimensions must be positive: " + shape_str(shape));
    require(shape_numel(shape) == data.size(),
            "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), std::vector<T>(data)) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }

  bool defined() const { return static_cast<bool>(impl_); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    require(numel() == 1, "item() on a tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }

  /// Leaf tensors that require grad always carry a zeroed gradient buffer.
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on) impl_->ensure_grad();
    return *this;
  }

  bool has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }

  void zero_grad() {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  bool is_leaf() const { return !impl_->producer; }

  /// Deep copy of the values only; the result is a fresh leaf.
  Tensor clone() const { return Tensor(shape(), impl_->data); }

  Tensor reshaped(Shape s) const {
    require(shape_numel(s) == numel(), "reshape to " + shape_str(s) + " from " + shape_str(shape()));
    return Tensor(std::move(s), impl_->data);
  }

  const detail::ImplPtr<T>& impl() const { return impl_; }
  static Tensor wrap(detail::ImplPtr<T> p) {
    Tensor t;
    t.impl_ = std::move(p);
    return t;
  }

 private:
  detail::ImplPtr<T> impl_;
};

namespace detail {

/// Builds the output of an op. The node is recorded only if grad mode is on
/// and at least one input requires a gradient.
template <typename T, typename Backward>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs, Backward&& backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool any = false;
  for (auto* in : inputs)
    if (in && in->defined() && in->requires_grad()) any = true;
  if (!any) return out;
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  for (auto* in : inputs)
    if (in && in->defined()) node->inputs.push_back(in->impl());
  node->backward = std::forward<Backward>(backward);
  out.impl()->requires_grad = true;
  out.impl()->producer = std::move(node);
  return out;
}

/// Gradient buffer of an input, or nullptr when it does not need one.
template <typename T>
T* grad_of(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  t.impl()->ensure_grad();
  return t.impl()->grad.data();
}

}  // namespace detail

/// Reverse-mode accumulation from a scalar loss into every leaf that requires
/// a gradient. Leaf gradients accumulate; call zero_grad between steps.
template <typename T>
void backward(const Tensor<T>& loss) {
  require(loss.defined() && loss.numel() == 1, "backward() needs a scalar loss");
  if (!loss.requires_grad()) return;
  auto root = loss.impl();
  if (!root->producer) {
    root->ensure_grad();
    root->grad[0] += T(1);
    return;
  }
  if (root->producer->consumed)
    fail(ErrorKind::invalid_state, "backward() called twice on the same graph without a new forward pass");

  // Iterative post-order DFS gives a topological order (inputs before users).
  // The order holds owning pointers because consumed nodes drop their inputs.
  std::vector<detail::ImplPtr<T>> order;
  std::unordered_set<detail::TensorImpl<T>*> seen;
  std::vector<std::pair<detail::ImplPtr<T>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto impl = stack.back().first;
    std::size_t& next = stack.back().second;
    if (impl->producer && next < impl->producer->inputs.size()) {
      auto child = impl->producer->inputs[next++];
      if (child->producer && !seen.count(child.get())) {
        if (child->producer->consumed)
          fail(ErrorKind::invalid_state, "graph segment was already consumed by an earlier backward()");
        seen.insert(child.get());
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(std::move(impl));
      stack.pop_back();
    }
  }

  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* impl = it->get();
    auto& node = *impl->producer;
    impl->ensure_grad();
    node.backward(std::span<const T>(impl->grad));
    node.consumed = true;
    // Saved intermediates are no longer needed.
    node.backward = nullptr;
    node.inputs.clear();
    if (impl != root.get()) {
      impl->grad.clear();
      impl->grad.shrink_to_fit();
    }
  }
}

}  // namespace mifruit
