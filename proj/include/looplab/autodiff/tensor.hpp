// Copyright (c) 2026, The looplab authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors with a reverse-mode tape.
//
// A Tensor is a shared handle to a graph node. Leaves own parameters and
// inputs; every op produces an interior node that remembers its parents and a
// backward closure when gradient recording is enabled and at least one input
// requires a gradient. backward() walks the reachable interior nodes once in
// reverse topological order, accumulates into leaf gradients, then releases
// the tape. A second backward over a released tape throws GraphError.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace looplab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Raised when an op produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Misuse of the tape: non-scalar seed, re-entrant backward, mutation of an interior node.
class GraphError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

/// Multiply-accumulate style FLOP tally (2 FLOPs per MAC) for matmul-class kernels.
struct FlopCounter {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;
    std::uint64_t total() const { return forward + backward; }
};

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty means "no gradient yet"
    bool requires_grad = false;
    bool leaf = true;
    bool released = false;
    const char* op = "leaf";
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    /// Gradient buffer of this node, zero-filled on first use.
    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

inline thread_local int no_grad_depth = 0;
inline thread_local FlopCounter* flop_sink = nullptr;

inline void count_forward(std::uint64_t flops) {
    if (flop_sink) flop_sink->forward += flops;
}
inline void count_backward(std::uint64_t flops) {
    if (flop_sink) flop_sink->backward += flops;
}

/// Gradient slot of parent `i` when it takes part in differentiation, else nullptr.
inline std::vector<double>* grad_of(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? &p.grad_buffer() : nullptr;
}

}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Disables tape recording for its lifetime.
class NoGradGuard {
   public:
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Routes kernel FLOP counts into `counter` for its lifetime.
class FlopScope {
   public:
    explicit FlopScope(FlopCounter& counter) : previous_(detail::flop_sink) { detail::flop_sink = &counter; }
    ~FlopScope() { detail::flop_sink = previous_; }
    FlopScope(const FlopScope&) = delete;
    FlopScope& operator=(const FlopScope&) = delete;

   private:
    FlopCounter* previous_;
};

class Tensor {
   public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (numel(shape) != values.size())
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                        std::to_string(values.size()) + " values");
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }
    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }
    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return from(std::move(shape), std::vector<double>(n, v), requires_grad);
    }
    static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    /// Leading extent for matrices, 1 for vectors.
    std::size_t rows() const { return rank() >= 2 ? node_->shape[0] : 1; }
    /// Trailing extent.
    std::size_t cols() const { return node_->shape.back(); }

    std::span<const double> data() const { return node_->value; }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double item() const {
        if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    /// Writable storage; only leaves (parameters, inputs) may be mutated.
    std::span<double> mutable_data() {
        if (!node_->leaf) throw GraphError("mutable_data() on a non-leaf tensor");
        return node_->value;
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) {
        if (!node_->leaf) throw GraphError("set_requires_grad() on a non-leaf tensor");
        node_->requires_grad = on;
    }
    bool is_leaf() const { return node_->leaf; }
    const char* op_name() const { return node_->op; }

    /// Accumulated gradient, or nullptr when none exists.
    const std::vector<double>* grad() const { return node_->grad.empty() ? nullptr : &node_->grad; }
    std::vector<double>* mutable_grad() { return node_->grad.empty() ? nullptr : &node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    /// Copy of the value as a fresh constant leaf.
    Tensor detach() const { return from(shape(), node_->value, false); }

    void backward() const;

    const detail::NodePtr& node() const { return node_; }
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

   private:
    detail::NodePtr node_;
};

namespace detail {

inline void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite value produced by ") + op);
}

/// Builds an op result. The closure is stored only when the result joins the tape.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
    check_finite(op, value);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    node->op = op;
    bool any = false;
    for (const auto& t : inputs) {
        if (t.node()->released) throw GraphError(std::string(op) + ": input belongs to a released graph");
        any = any || t.requires_grad();
    }
    if (grad_enabled() && any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& t : inputs) node->parents.push_back(t.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

inline void Tensor::backward() const {
    using detail::Node;
    if (size() != 1) throw GraphError("backward() needs a scalar seed, got " + shape_str(shape()));
    if (node_->released) throw GraphError("backward() on a released graph; rebuild the forward pass");
    if (!node_->requires_grad) throw GraphError("backward() on a tensor that does not require grad");
    if (node_->leaf) {
        node_->grad_buffer()[0] += 1.0;
        return;
    }

    // Iterative post-order DFS over interior nodes that take part in differentiation.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->released) throw GraphError("backward() reaches a released node; rebuild the forward pass");
            if (!p->leaf && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->grad.empty() && n->backward_fn) n->backward_fn(*n);
    }
    for (Node* n : order) {
        n->released = true;
        n->backward_fn = nullptr;
        n->parents.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

}  // namespace looplab
