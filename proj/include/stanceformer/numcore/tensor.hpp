#pragma once

// Dense row-major tensor with a recorded reverse-mode graph.
//
// A Tensor is a cheap handle onto a shared node. Nodes produced by an op are
// never mutated afterwards (only their gradient buffer is), so finished values
// may be read concurrently. Leaf parameters are the one exception: the
// optimizer writes them in place while holding exclusive access.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stanceformer/error.hpp"

namespace stanceformer::num {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

inline thread_local bool grad_recording = true;

}  // namespace detail

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_recording) { detail::grad_recording = false; }
  ~NoGradGuard() { detail::grad_recording = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> data(numel(shape), T{0});
    return from(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    }
    if (numel(shape) != data.size()) {
      std::ostringstream os;
      os << "shape " << to_string(shape) << " needs " << numel(shape) << " values, got " << data.size();
      throw DimensionError(os.str());
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  // Builds the output of a differentiable op. `backward` is dropped when no
  // parent needs a gradient, which keeps inference graphs free.
  static Tensor make_result(Shape shape, std::vector<T> data, std::vector<Tensor> parents,
                            std::function<void(detail::Node<T>&)> backward) {
    Tensor out = from(std::move(shape), std::move(data));
    bool needs = false;
    if (detail::grad_recording)
      for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->backward = std::move(backward);
      out.node_->parents.reserve(parents.size());
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
    }
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t dim(std::size_t i) const { return node().shape.at(i); }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t size() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  // In-place write access; only valid for leaves that no live graph reads.
  std::span<T> mutable_data() { return node().data; }
  T item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return node().data[0];
  }
  T operator[](std::size_t i) const { return node().data[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() { node().grad.assign(node().data.size(), T{0}); }
  void clear_grad() { node().grad.clear(); }

  // Detached copy with fresh storage.
  Tensor clone(bool requires_grad = false) const { return from(shape(), node().data, requires_grad); }

  // Seeds d(self)/d(self) = 1 and runs the recorded graph in reverse
  // topological order. Only defined for single-element tensors.
  void backward() const {
    if (size() != 1) throw UsageError("backward() requires a scalar, got shape " + to_string(shape()));
    if (!requires_grad()) throw UsageError("backward() on a tensor that does not require grad");
    std::vector<detail::Node<T>*> order;
    {
      std::unordered_set<detail::Node<T>*> seen;
      // Iterative post-order DFS; encoder graphs are deep enough to make
      // recursion uncomfortable.
      std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
      seen.insert(node_.get());
      while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
          detail::Node<T>* p = n->parents[next++].get();
          if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
          order.push_back(n);
          stack.pop_back();
        }
      }
    }
    node_->ensure_grad()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node<T>* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }

  const NodePtr& node_ptr() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  detail::Node<T>& node() const {
    if (!node_) throw UsageError("use of an undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

// Gradient buffer of a parent node, allocated on first use.
template <typename T>
std::vector<T>& parent_grad(detail::Node<T>& self, std::size_t i) {
  return self.parents[i]->ensure_grad();
}

template <typename T>
bool parent_wants_grad(const detail::Node<T>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

}  // namespace stanceformer::num
