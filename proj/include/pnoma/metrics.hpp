// SPDX-License-Identifier: Apache-2.0
//
// Image quality metrics on (C, H, W) tensors.
#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "pnoma/tensor.hpp"

namespace pnoma::metrics {

/// Value reported for identical images (MSE == 0), keeping CSV files numeric.
inline constexpr double kPsnrCap = 100.0;

double mse(const Tensor& x, const Tensor& y);

/// 10 log10(A^2 / MSE) in dB; kPsnrCap when MSE == 0.
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);

struct SsimConstants {
    double c1;
    double c2;
    static SsimConstants for_peak(double peak) { return {0.01 * peak * 0.01 * peak, 0.03 * peak * 0.03 * peak}; }
};

/// Images up to this side length use global statistics; larger ones use an
/// 8x8 uniform sliding window.
inline constexpr std::size_t kGlobalSsimMaxSide = 32;
inline constexpr std::size_t kSsimWindow = 8;

/// Single-scale SSIM, averaged over channels (and windows for large images).
double ssim(const Tensor& x, const Tensor& y, double peak = 1.0);

/// SSIM from precomputed moments.
double ssim_from_moments(double mu_x, double mu_y, double var_x, double var_y, double cov, SsimConstants c);

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr std::size_t kMsSsimMaxFilter = 11;

/// floor(log2(min(W, H) / filter)) + 1
std::size_t ms_ssim_max_scales(std::size_t width, std::size_t height, std::size_t filter);

/// Largest filter <= kMsSsimMaxFilter admitting `scales` scales; 0 if none.
std::size_t ms_ssim_filter_for(std::size_t width, std::size_t height, std::size_t scales);

/// [prod_j SSIM(x^j, y^j)^{w_j}]^{1 / sum_j w_j} with 2x2 average pooling
/// between scales. Throws ContractViolation naming the feasible scale count
/// when the image is too small for `weights.size()` scales at `filter`.
/// Negative per-scale SSIM values are clamped to 0 when more than one scale
/// is used.
double ms_ssim(const Tensor& x, const Tensor& y, std::span<const double> weights, std::size_t filter,
               double peak = 1.0);

/// ms_ssim with the default weights and the largest admissible filter; the
/// scale count is reduced when even a 1-pixel filter does not fit.
double ms_ssim_auto(const Tensor& x, const Tensor& y, double peak = 1.0);

/// 2x2 average pooling of a (C, H, W) tensor (odd trailing rows/columns dropped).
Tensor downsample2(const Tensor& x);

}  // namespace pnoma::metrics
