// Dense N-dimensional tensor with reverse-mode automatic differentiation.
//
// Tensor<T> is a cheap handle onto a shared node; copying a Tensor aliases
// the same storage, which is what lets operations record a graph of the
// values they produced. T is float for training and double for the
// finite-difference gradient checks in the test suite.
//
// The graph is a tape: each op that runs with gradients enabled appends a
// node holding its parents and a backward closure. backward() on a scalar
// walks the tape once in reverse topological order and accumulates into
// .grad() additively, so backpropagating a sum of losses equals summing the
// per-loss gradients.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace food {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Raised when a computation produces or consumes non-finite values.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

// Thread-local so frozen-model inference can run concurrently, each thread
// holding its own no-grad scope.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // lazily sized on first accumulation
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T value, bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->data.assign(shape_numel(t.node_->shape), value);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("tensor: data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t rank() const { return node_->shape.size(); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }

    // Gradient accumulated by backward(); zeros if nothing reached it yet.
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    T item() const {
        if (numel() != 1) {
            throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
        }
        return node_->data[0];
    }

    void zero_grad() {
        if (node_->grad.size() == node_->data.size()) {
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
        }
    }

    bool all_finite() const {
        for (T v : node_->data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void check_finite(const char* what) const {
        if (!all_finite()) {
            throw NumericError(std::string(what) + ": non-finite value in tensor " +
                               shape_str(shape()));
        }
    }

    // Copy of the values with no graph attached.
    Tensor detached_copy() const {
        return from_data(shape(), data(), false);
    }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    // Constructs the op output. Parents and the closure are recorded only
    // when gradients are enabled and some input needs them.
    static Tensor make_op_result(Shape shape, std::vector<T> data,
                                 std::vector<Tensor> inputs,
                                 std::function<void(TensorNode<T>&)> backward_fn) {
        bool track = grad_enabled();
        if (track) {
            bool any = false;
            for (const Tensor& in : inputs) any = any || in.requires_grad();
            track = any;
        }
        Tensor out = from_data(std::move(shape), std::move(data), track);
        if (track) {
            out.node_->parents.reserve(inputs.size());
            for (Tensor& in : inputs) out.node_->parents.push_back(in.node_);
            out.node_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

    // Reverse-mode sweep from a scalar. Each reachable node is visited
    // exactly once, in reverse execution order; gradients add up across
    // repeated backward() calls.
    void backward() {
        if (numel() != 1) {
            throw ShapeError("backward: output " + shape_str(shape()) + " is not scalar");
        }
        if (!node_->requires_grad) {
            throw std::logic_error("backward: output does not require gradients");
        }
        std::vector<TensorNode<T>*> order;
        topo_order(order);
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
        }
    }

private:
    // Iterative post-order DFS over the parent lists. Parents are walked in
    // their recorded order, so the visitation order is deterministic.
    void topo_order(std::vector<TensorNode<T>*>& order) const {
        std::unordered_set<TensorNode<T>*> seen;
        std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                TensorNode<T>* parent = node->parents[next++].get();
                if (parent->requires_grad && seen.insert(parent).second) {
                    stack.emplace_back(parent, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<TensorNode<T>> node_;
};

// Accumulate `g` into the node's gradient buffer if it takes part in
// differentiation. Shared helper for op backward closures.
template <typename T>
inline void accumulate_grad(const std::shared_ptr<TensorNode<T>>& node, const T* g) {
    if (!node->requires_grad) return;
    node->ensure_grad();
    T* dst = node->grad.data();
    const std::size_t n = node->data.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace food
