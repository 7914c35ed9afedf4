// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and oracles for the unit tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pnoma/rng.hpp"
#include "pnoma/tensor.hpp"

namespace pnoma::test {

inline std::vector<double> uniform_values(std::size_t count, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(count);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Tensor random_param(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::parameter(shape, uniform_values(shape_numel(shape), rng, lo, hi));
}

inline Tensor random_const(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::from(shape, uniform_values(shape_numel(shape), rng, lo, hi));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

// Central differences of `loss()` with respect to every element of `param`,
// written independently of the library's grad_check.
inline std::vector<double> numeric_gradient(const std::function<double()>& loss, Tensor param, double step = 1e-5) {
    auto values = param.mutable_data();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double plus = loss();
        values[i] = saved - step;
        const double minus = loss();
        values[i] = saved;
        g[i] = (plus - minus) / (2.0 * step);
    }
    return g;
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                            double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / d);
    }
    return worst;
}

// Backpropagates build() and compares every listed parameter to central differences.
inline double worst_gradient_error(const std::function<Tensor()>& build, std::vector<Tensor> params) {
    for (auto& p : params) p.zero_grad();
    backward(build());
    double worst = 0.0;
    for (auto& p : params) {
        const auto analytic = p.grad();
        const auto numeric = numeric_gradient([&] { return build().item(); }, p);
        worst = std::max(worst, max_rel_error(analytic, numeric));
        p.zero_grad();
    }
    return worst;
}

}  // namespace pnoma::test
