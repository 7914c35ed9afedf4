// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Every function here records an adjoint on the
// graph; see tests/test_ops.cpp for the finite-difference checks.
//
// Image tensors are channel-major (C, H, W) without a batch axis.
#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "pnoma/tensor.hpp"

namespace pnoma::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a * c for a constant c.
Tensor scale(const Tensor& a, double c);
/// a / s where s is treated as a constant (no gradient to s).
Tensor div_detached(const Tensor& a, double s);
/// Broadcasts a one-element tensor to `shape`.
Tensor broadcast(const Tensor& s, const Shape& shape);

Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Squared Euclidean norm of all elements.
Tensor l2_sq(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Concatenates (C_i, H, W) tensors along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// (r x k) * (k x c).
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);

/// x: (C, H, W); w: (O, C, K, K); b: (O). Zero padding on both sides.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
/// Adjoint of conv2d. x: (C, H, W); w: (C, O, K, K); b: (O).
/// Output spatial size (H - 1) * stride - 2 * pad + K + out_pad.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                        std::size_t pad, std::size_t out_pad);

/// Scales a flat (re | im) vector of k complex symbols so that
/// (1/k) * ||z||^2 == power. Gradient flows through the norm.
Tensor normalize_power(const Tensor& z, std::size_t k, double power);
/// Multiplies a flat (re | im) complex vector by a constant complex gain.
Tensor complex_gain(const Tensor& z, std::complex<double> h);

/// Mean squared error, (1/numel) * ||x - y||^2.
Tensor mse(const Tensor& x, const Tensor& y);

}  // namespace pnoma::ops
