// SPDX-License-Identifier: Apache-2.0
//
// Real n-dimensional tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Leaves created with
// Tensor::parameter accumulate gradients across backward() calls until
// zero_grad(); interior nodes hold a closure that pushes their gradient to
// their parents. Values are 64-bit, row-major.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pnoma {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backward;

    void accumulate(std::span<const double> g);
    std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double v);
    /// Trainable leaf.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t i) const { return shape().at(i); }
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> data() const;
    /// In-place access for optimizers and tests. Only valid on leaves.
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }
    std::vector<double> to_vector() const;

    bool requires_grad() const;
    bool is_leaf() const;
    const std::string& op_name() const;
    void set_requires_grad(bool on);

    bool has_grad() const;
    /// Gradient buffer; zeros when nothing has been accumulated.
    std::vector<double> grad() const;
    void zero_grad();

    /// Fresh leaf holding a copy of the values, detached from any graph.
    Tensor detach() const;
    Tensor clone_parameter() const;

    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    // Used by op implementations.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Builds an interior node. `backward` receives the node (its grad populated)
/// and must accumulate into the parents. Values are checked for NaN/Inf and a
/// NumericError naming `op` is raised on failure. When no parent requires a
/// gradient, or inside a NoGradGuard, the node is created as a constant.
Tensor make_op(std::string op, Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward);

/// Reverse-mode pass from a scalar root. Gradients accumulate into every
/// requires_grad leaf reachable from `root`; interior gradients are released.
void backward(const Tensor& root);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

}  // namespace pnoma
