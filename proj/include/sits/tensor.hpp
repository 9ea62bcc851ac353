#pragma once

// Dense row-major tensor with a tape-free reverse-mode graph.
//
// A Tensor is a cheap handle onto a shared node. Operations producing a
// tensor from inputs that require gradients record their inputs and a
// backward closure on the result node; backward() walks the graph once in
// reverse topological order and then releases it.

#include <Eigen/Core>

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sits/error.hpp"

namespace sits {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <typename Scalar>
struct TensorNode {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Shape shape;
    Array data;
    Array grad; // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward;

    Array& grad_buffer()
    {
        if (grad.size() == 0) grad = Array::Zero(data.size());
        return grad;
    }
};

template <typename Scalar>
class Tensor {
public:
    using Node = TensorNode<Scalar>;
    using Array = typename Node::Array;

    Tensor() = default;

    Tensor(Shape shape, Array data, bool requires_grad = false)
        : node_(std::make_shared<Node>())
    {
        for (Index d : shape) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        if (numel(shape) != data.size()) {
            throw ShapeError("tensor shape " + shape_str(shape) + " does not hold " +
                             std::to_string(data.size()) + " elements");
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false)
    {
        const Index n = numel(shape);
        return Tensor(std::move(shape), Array::Zero(n), requires_grad);
    }

    static Tensor full(Shape shape, Scalar value, bool requires_grad = false)
    {
        const Index n = numel(shape);
        return Tensor(std::move(shape), Array::Constant(n, value), requires_grad);
    }

    static Tensor from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false)
    {
        Array a(static_cast<Index>(values.size()));
        std::copy(values.begin(), values.end(), a.data());
        return Tensor(std::move(shape), std::move(a), requires_grad);
    }

    static Tensor scalar(Scalar value, bool requires_grad = false)
    {
        return full({1}, value, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    Index dim(int axis) const
    {
        const int n = ndim();
        if (axis < 0) axis += n;
        if (axis < 0 || axis >= n) throw ShapeError("axis out of range for shape " + shape_str(shape()));
        return node_->shape[static_cast<std::size_t>(axis)];
    }
    Index size() const { return node_->data.size(); }

    const Array& data() const { return node_->data; }
    // Mutable storage; only for leaves (parameters, inputs) outside a recorded graph.
    Array& data_mut() { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return node_->grad.size() != 0; }
    const Array& grad() const { return node_->grad; }
    Array& grad_mut() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.resize(0); }

    Scalar item() const
    {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    /// Copy of the values without graph linkage.
    Tensor detach() const { return Tensor(shape(), data(), false); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape,
                           typename Tensor<Scalar>::Array data,
                           std::initializer_list<const Tensor<Scalar>*> inputs,
                           std::function<void(TensorNode<Scalar>&)> backward)
{
    Tensor<Scalar> out(std::move(shape), std::move(data));
    if (!sits::grad_enabled()) return out;
    bool any = false;
    for (const auto* in : inputs) any = any || in->requires_grad();
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto* in : inputs) node.parents.push_back(in->node());
    node.backward = std::move(backward);
    return out;
}

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape,
                           typename Tensor<Scalar>::Array data,
                           const std::vector<Tensor<Scalar>>& inputs,
                           std::function<void(TensorNode<Scalar>&)> backward)
{
    Tensor<Scalar> out(std::move(shape), std::move(data));
    if (!sits::grad_enabled()) return out;
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<Scalar>& t) { return t.requires_grad(); });
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node());
    node.backward = std::move(backward);
    return out;
}

} // namespace detail

/// Populates grad on every tensor reachable from a scalar loss that
/// requires gradients. Gradients accumulate across fan-out and across calls;
/// the recorded graph is released afterwards.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss)
{
    if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw Error("backward() on a tensor that does not require grad");

    using Node = TensorNode<Scalar>;
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS; each node is emitted once, after its parents.
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad.size() != 0) node->backward(*node);
    }
    for (Node* node : order) {
        if (node->backward) {
            node->backward = nullptr;
            node->parents.clear();
        }
    }
}

} // namespace sits
