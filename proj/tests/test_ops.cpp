// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <complex>

#include "pnoma/errors.hpp"
#include "pnoma/ops.hpp"
#include "support.hpp"

using namespace pnoma;
using test::random_const;
using test::random_param;
using test::worst_gradient_error;

namespace {

constexpr double kTol = 1e-4;

// Direct-loop convolution oracle, (C, H, W) input, (O, C, K, K) weights.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t s, std::size_t p) {
    const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2), o = w.dim(0), k = w.dim(2);
    const std::size_t oh = (h + 2 * p - k) / s + 1, ow = (wd + 2 * p - k) / s + 1;
    std::vector<double> out(o * oh * ow);
    for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double acc = b[oc];
                for (std::size_t ic = 0; ic < c; ++ic)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long iy = static_cast<long>(y * s + ky) - static_cast<long>(p);
                            const long ix = static_cast<long>(xx * s + kx) - static_cast<long>(p);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                            acc += x[(ic * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] *
                                   w[((oc * c + ic) * k + ky) * k + kx];
                        }
                out[(oc * oh + y) * ow + xx] = acc;
            }
    return out;
}

// Scatter oracle for the transposed convolution, (C, O, K, K) weights.
std::vector<double> naive_conv_t(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t s, std::size_t p,
                                 std::size_t op) {
    const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2), o = w.dim(1), k = w.dim(2);
    const std::size_t oh = (h - 1) * s + k - 2 * p + op, ow = (wd - 1) * s + k - 2 * p + op;
    std::vector<double> out(o * oh * ow);
    for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t i = 0; i < oh * ow; ++i) out[oc * oh * ow + i] = b[oc];
    for (std::size_t ic = 0; ic < c; ++ic)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < wd; ++xx)
                for (std::size_t oc = 0; oc < o; ++oc)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long ty = static_cast<long>(y * s + ky) - static_cast<long>(p);
                            const long tx = static_cast<long>(xx * s + kx) - static_cast<long>(p);
                            if (ty < 0 || tx < 0 || ty >= static_cast<long>(oh) || tx >= static_cast<long>(ow)) continue;
                            out[(oc * oh + static_cast<std::size_t>(ty)) * ow + static_cast<std::size_t>(tx)] +=
                                x[(ic * h + y) * wd + xx] * w[((ic * o + oc) * k + ky) * k + kx];
                        }
    return out;
}

// Weighted sum with fixed random weights, so every output element matters.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    RngStream rng(seed, 0);
    return ops::sum(ops::mul(y, random_const(y.shape(), rng)));
}

}  // namespace

TEST_SUITE("ops forward") {
    TEST_CASE("elementwise arithmetic") {
        auto a = Tensor::from({3}, {1.0, 2.0, 3.0});
        auto b = Tensor::from({3}, {4.0, -5.0, 6.0});
        CHECK(ops::add(a, b).to_vector() == std::vector<double>{5.0, -3.0, 9.0});
        CHECK(ops::sub(a, b).to_vector() == std::vector<double>{-3.0, 7.0, -3.0});
        CHECK(ops::mul(a, b).to_vector() == std::vector<double>{4.0, -10.0, 18.0});
        CHECK(ops::scale(a, -2.0).to_vector() == std::vector<double>{-2.0, -4.0, -6.0});
        CHECK(ops::div_detached(a, 2.0).to_vector() == std::vector<double>{0.5, 1.0, 1.5});
        CHECK_THROWS_AS(ops::add(a, Tensor::zeros({2})), ContractViolation);
        CHECK_THROWS_AS(ops::div_detached(a, 0.0), ContractViolation);
    }

    TEST_CASE("activations") {
        auto x = Tensor::from({3}, {-2.0, 0.0, 3.0});
        CHECK(ops::leaky_relu(x, 0.01).to_vector() == std::vector<double>{-0.02, 0.0, 3.0});
        const auto s = ops::sigmoid(x).to_vector();
        CHECK(s[0] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-15));
        CHECK(s[1] == 0.5);
    }

    TEST_CASE("reductions") {
        auto x = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
        CHECK(ops::sum(x).item() == 10.0);
        CHECK(ops::mean(x).item() == 2.5);
        CHECK(ops::l2_sq(x).item() == 30.0);
        CHECK(ops::mse(x, Tensor::zeros({2, 2})).item() == 7.5);
    }

    TEST_CASE("broadcast, reshape and concat are content-preserving") {
        CHECK(ops::broadcast(Tensor::scalar(2.0), {2, 3}).to_vector() == std::vector<double>(6, 2.0));
        RngStream rng(1, 1);
        auto x = random_const({2, 3, 4}, rng);
        CHECK(ops::reshape(ops::reshape(x, {24}), {2, 3, 4}).to_vector() == x.to_vector());
        CHECK_THROWS_AS(ops::reshape(x, {5, 5}), ContractViolation);
        auto y = random_const({1, 3, 4}, rng);
        auto cat = ops::concat_channels(x, y);
        CHECK(cat.shape() == Shape{3, 3, 4});
        std::vector<double> expected = x.to_vector();
        for (double v : y.data()) expected.push_back(v);
        CHECK(cat.to_vector() == expected);
        CHECK_THROWS_AS(ops::concat_channels(x, random_const({1, 4, 4}, rng)), ContractViolation);
    }

    TEST_CASE("matmul and transpose") {
        auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
        auto b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
        CHECK(ops::matmul(a, b).to_vector() == std::vector<double>{58, 64, 139, 154});
        CHECK(ops::transpose(a).to_vector() == std::vector<double>{1, 4, 2, 5, 3, 6});
        CHECK_THROWS_AS(ops::matmul(a, a), ContractViolation);
    }

    TEST_CASE("conv2d matches the direct-loop oracle") {
        RngStream rng(5, 5);
        for (std::size_t stride : {1u, 2u}) {
            auto x = random_const({3, 8, 8}, rng);
            auto w = random_const({4, 3, 3, 3}, rng);
            auto b = random_const({4}, rng);
            const auto y = ops::conv2d(x, w, b, stride, 1);
            CHECK(y.shape() == Shape{4, 8 / stride, 8 / stride});
            CHECK(test::max_abs_diff(y.data(), naive_conv(x, w, b, stride, 1)) < 1e-12);
        }
    }

    TEST_CASE("conv_transpose2d matches the scatter oracle") {
        RngStream rng(6, 6);
        auto x = random_const({3, 4, 4}, rng);
        auto w = random_const({3, 2, 3, 3}, rng);
        auto b = random_const({2}, rng);
        const auto y = ops::conv_transpose2d(x, w, b, 2, 1, 1);
        CHECK(y.shape() == Shape{2, 8, 8});
        CHECK(test::max_abs_diff(y.data(), naive_conv_t(x, w, b, 2, 1, 1)) < 1e-12);
    }

    TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
        // <conv(x), y> == <x, convT(y)> with shared weights and zero bias
        RngStream rng(8, 8);
        auto x = random_const({2, 8, 8}, rng);
        auto w = random_const({3, 2, 3, 3}, rng);
        auto y = random_const({3, 4, 4}, rng);
        const double lhs = ops::sum(ops::mul(ops::conv2d(x, w, Tensor::zeros({3}), 2, 1), y)).item();
        const double rhs = ops::sum(ops::mul(x, ops::conv_transpose2d(y, w, Tensor::zeros({2}), 2, 1, 1))).item();
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }

    TEST_CASE("normalize_power meets the constraint and keeps direction") {
        auto z = Tensor::from({8}, {1.0, 0, 0, 0, 0, 0, 0, 0});
        CHECK(ops::normalize_power(z, 4, 1.0).to_vector() == std::vector<double>{2.0, 0, 0, 0, 0, 0, 0, 0});
        CHECK_THROWS_AS(ops::normalize_power(Tensor::zeros({8}), 4, 1.0), DegenerateInput);
    }

    TEST_CASE("complex_gain multiplies (re | im) pairs") {
        auto z = Tensor::from({4}, {1.0, 2.0, 3.0, -1.0});  // 1+3i, 2-i
        const auto y = ops::complex_gain(z, {0.0, 1.0}).to_vector();
        // i(1+3i) = -3+i, i(2-i) = 1+2i
        CHECK(y == std::vector<double>{-3.0, 1.0, 1.0, 2.0});
    }
}

TEST_SUITE("ops gradients") {
    TEST_CASE("add, sub, mul") {
        RngStream rng(1, 0);
        auto a = random_param({2, 3}, rng);
        auto b = random_param({2, 3}, rng);
        CHECK(worst_gradient_error([&] { return probe(ops::add(a, b)); }, {a, b}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::sub(a, b)); }, {a, b}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::mul(a, b)); }, {a, b}) < kTol);
    }

    TEST_CASE("scale, div_detached, broadcast") {
        RngStream rng(2, 0);
        auto a = random_param({5}, rng);
        auto s = random_param({1}, rng);
        CHECK(worst_gradient_error([&] { return probe(ops::scale(a, -1.7)); }, {a}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::div_detached(a, 3.0)); }, {a}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::broadcast(s, {2, 3})); }, {s}) < kTol);
    }

    TEST_CASE("leaky_relu and sigmoid away from the kink") {
        auto x = Tensor::parameter({6}, {-2.0, -0.7, -0.1, 0.2, 0.9, 3.0});
        CHECK(worst_gradient_error([&] { return probe(ops::leaky_relu(x, 0.01)); }, {x}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::sigmoid(x)); }, {x}) < kTol);
    }

    TEST_CASE("sum, mean, l2_sq, mse") {
        RngStream rng(3, 0);
        auto x = random_param({3, 4}, rng);
        auto y = random_param({3, 4}, rng);
        CHECK(worst_gradient_error([&] { return ops::scale(ops::sum(x), 2.0); }, {x}) < kTol);
        CHECK(worst_gradient_error([&] { return ops::mean(ops::mul(x, x)); }, {x}) < kTol);
        CHECK(worst_gradient_error([&] { return ops::l2_sq(x); }, {x}) < kTol);
        CHECK(worst_gradient_error([&] { return ops::mse(x, y); }, {x, y}) < kTol);
    }

    TEST_CASE("reshape, concat_channels, transpose") {
        RngStream rng(4, 0);
        auto a = random_param({2, 3, 2}, rng);
        auto b = random_param({1, 3, 2}, rng);
        auto m = random_param({3, 4}, rng);
        CHECK(worst_gradient_error([&] { return probe(ops::reshape(a, {3, 4})); }, {a}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::concat_channels(a, b)); }, {a, b}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::transpose(m)); }, {m}) < kTol);
    }

    TEST_CASE("matmul") {
        RngStream rng(5, 0);
        auto a = random_param({3, 4}, rng);
        auto b = random_param({4, 2}, rng);
        CHECK(worst_gradient_error([&] { return probe(ops::matmul(a, b)); }, {a, b}) < kTol);
    }

    TEST_CASE("conv2d at strides 1 and 2") {
        RngStream rng(6, 0);
        auto x = random_param({2, 6, 6}, rng);
        auto w = random_param({3, 2, 3, 3}, rng);
        auto b = random_param({3}, rng);
        for (std::size_t stride : {1u, 2u})
            CHECK(worst_gradient_error([&] { return probe(ops::conv2d(x, w, b, stride, 1)); }, {x, w, b}) < kTol);
    }

    TEST_CASE("conv_transpose2d") {
        RngStream rng(7, 0);
        auto x = random_param({2, 3, 3}, rng);
        auto w = random_param({2, 3, 3, 3}, rng);
        auto b = random_param({3}, rng);
        CHECK(worst_gradient_error([&] { return probe(ops::conv_transpose2d(x, w, b, 2, 1, 1)); }, {x, w, b}) <
              kTol);
    }

    TEST_CASE("normalize_power and complex_gain") {
        RngStream rng(8, 0);
        auto z = random_param({12}, rng);
        CHECK(worst_gradient_error([&] { return probe(ops::normalize_power(z, 6, 0.25)); }, {z}) < kTol);
        CHECK(worst_gradient_error([&] { return probe(ops::complex_gain(z, {0.3, -1.2})); }, {z}) < kTol);
    }

    TEST_CASE("randomized small shapes across the whole op set") {
        RngStream rng(2025, 0);
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t c = 1 + rng.below(3), hw = 2 * (1 + rng.below(3)), o = 1 + rng.below(3);
            auto x = random_param({c, hw, hw}, rng);
            auto w = random_param({o, c, 3, 3}, rng);
            auto b = random_param({o}, rng);
            auto wt = random_param({o, c, 3, 3}, rng);
            auto bt = random_param({c}, rng);
            auto build = [&] {
                auto h = ops::leaky_relu(ops::conv2d(x, w, b, 2, 1), 0.1);
                auto up = ops::sigmoid(ops::conv_transpose2d(h, wt, bt, 2, 1, 1));
                return ops::mse(up, ops::scale(x, 0.5));
            };
            CHECK(worst_gradient_error(build, {x, w, b, wt, bt}) < kTol);
        }
    }
}
