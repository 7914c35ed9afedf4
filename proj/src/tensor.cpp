// SPDX-License-Identifier: Apache-2.0
#include "pnoma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "pnoma/errors.hpp"

namespace pnoma {

namespace {
thread_local bool g_grad_enabled = true;

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

void Node::accumulate(std::span<const double> g) {
    auto& buf = grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

namespace {
std::shared_ptr<detail::Node> new_leaf(Shape shape, std::vector<double> values) {
    for (auto d : shape)
        if (d == 0) throw ContractViolation("tensor dimensions must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != values.size())
        throw ContractViolation("tensor shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return node;
}
}  // namespace

Tensor Tensor::zeros(Shape shape) {
    const auto n = shape_numel(shape);
    return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double v) {
    const auto n = shape_numel(shape);
    return Tensor(new_leaf(std::move(shape), std::vector<double>(n, v)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    return Tensor(new_leaf(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
    if (!node_->is_leaf) throw ContractViolation("mutable_data on a non-leaf tensor (" + node_->op + ")");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

std::vector<double> Tensor::to_vector() const { return node_->value; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf; }
const std::string& Tensor::op_name() const { return node_->op; }

void Tensor::set_requires_grad(bool on) {
    if (!node_->is_leaf) throw ContractViolation("set_requires_grad on a non-leaf tensor");
    node_->requires_grad = on;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor Tensor::clone_parameter() const {
    Tensor t = detach();
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

Tensor make_op(std::string op, Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward) {
    if (!all_finite(value)) throw NumericError("non-finite value produced by forward of '" + op + "'");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = std::move(op);
    node->is_leaf = false;
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                     [](const Tensor& p) { return p.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& root) {
    if (!root.defined() || root.numel() != 1)
        throw ContractViolation("backward requires a scalar root, got shape " +
                                (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->is_leaf) continue;
        node->grad_buffer();
        node->backward(*node);
        for (auto& p : node->parents) {
            if (p->requires_grad && !all_finite(p->grad))
                throw NumericError("non-finite gradient produced by backward of '" + node->op + "'");
        }
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

}  // namespace pnoma
