// SPDX-License-Identifier: Apache-2.0
#include "pnoma/metrics.hpp"

#include <cmath>
#include <string>

#include "pnoma/errors.hpp"

namespace pnoma::metrics {

namespace {

void require_match(const char* fn, const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape())
        throw ContractViolation(std::string(fn) + ": shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(y.shape()));
    if (x.rank() != 3) throw ContractViolation(std::string(fn) + ": expected (C, H, W) images");
}

// SSIM over the window [y0, y0+wh) x [x0, x0+ww) of one channel plane.
double window_ssim(const double* a, const double* b, std::size_t stride, std::size_t y0, std::size_t x0,
                   std::size_t wh, std::size_t ww, SsimConstants c) {
    const double count = static_cast<double>(wh * ww);
    double sa = 0.0, sb = 0.0;
    for (std::size_t y = y0; y < y0 + wh; ++y)
        for (std::size_t x = x0; x < x0 + ww; ++x) {
            sa += a[y * stride + x];
            sb += b[y * stride + x];
        }
    const double ma = sa / count, mb = sb / count;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t y = y0; y < y0 + wh; ++y)
        for (std::size_t x = x0; x < x0 + ww; ++x) {
            const double da = a[y * stride + x] - ma, db = b[y * stride + x] - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
    return ssim_from_moments(ma, mb, va / count, vb / count, cov / count, c);
}

}  // namespace

double mse(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw ContractViolation("mse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s / static_cast<double>(x.numel());
}

double psnr(const Tensor& x, const Tensor& y, double peak) {
    if (!(peak > 0.0)) throw ContractViolation("psnr: peak must be positive");
    const double e = mse(x, y);
    if (e == 0.0) return kPsnrCap;
    return 10.0 * std::log10(peak * peak / e);
}

double ssim_from_moments(double mu_x, double mu_y, double var_x, double var_y, double cov, SsimConstants c) {
    return ((2.0 * mu_x * mu_y + c.c1) * (2.0 * cov + c.c2)) /
           ((mu_x * mu_x + mu_y * mu_y + c.c1) * (var_x + var_y + c.c2));
}

double ssim(const Tensor& x, const Tensor& y, double peak) {
    require_match("ssim", x, y);
    const auto c = SsimConstants::for_peak(peak);
    const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2), plane = h * w;
    const bool global = std::max(h, w) <= kGlobalSsimMaxSide || std::min(h, w) < kSsimWindow;
    double total = 0.0;
    for (std::size_t k = 0; k < ch; ++k) {
        const double* a = x.data().data() + k * plane;
        const double* b = y.data().data() + k * plane;
        if (global) {
            total += window_ssim(a, b, w, 0, 0, h, w, c);
        } else {
            double s = 0.0;
            std::size_t windows = 0;
            for (std::size_t y0 = 0; y0 + kSsimWindow <= h; ++y0)
                for (std::size_t x0 = 0; x0 + kSsimWindow <= w; ++x0, ++windows)
                    s += window_ssim(a, b, w, y0, x0, kSsimWindow, kSsimWindow, c);
            total += s / static_cast<double>(windows);
        }
    }
    return total / static_cast<double>(ch);
}

std::size_t ms_ssim_max_scales(std::size_t width, std::size_t height, std::size_t filter) {
    if (filter == 0) throw ContractViolation("ms_ssim: filter size must be positive");
    const std::size_t side = std::min(width, height);
    if (side < filter) return 0;
    std::size_t scales = 1;
    while ((side >> scales) >= filter) ++scales;
    return scales;
}

std::size_t ms_ssim_filter_for(std::size_t width, std::size_t height, std::size_t scales) {
    if (scales == 0) return 0;
    const std::size_t side = std::min(width, height) >> (scales - 1);
    return std::min(side, kMsSsimMaxFilter);
}

Tensor downsample2(const Tensor& x) {
    const std::size_t ch = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2, sw = x.dim(2), sh = x.dim(1);
    if (h == 0 || w == 0) throw ContractViolation("downsample2: image too small");
    std::vector<double> v(ch * h * w);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx) {
                const double* p = x.data().data() + c * sh * sw;
                v[(c * h + yy) * w + xx] = 0.25 * (p[2 * yy * sw + 2 * xx] + p[2 * yy * sw + 2 * xx + 1] +
                                                   p[(2 * yy + 1) * sw + 2 * xx] + p[(2 * yy + 1) * sw + 2 * xx + 1]);
            }
    return Tensor::from({ch, h, w}, std::move(v));
}

double ms_ssim(const Tensor& x, const Tensor& y, std::span<const double> weights, std::size_t filter, double peak) {
    require_match("ms_ssim", x, y);
    if (weights.empty()) throw ContractViolation("ms_ssim: at least one scale weight required");
    const std::size_t eff = std::min(filter, std::min(x.dim(1), x.dim(2)));
    const std::size_t feasible = ms_ssim_max_scales(x.dim(2), x.dim(1), eff);
    if (weights.size() > feasible)
        throw ContractViolation("ms_ssim: image " + shape_str(x.shape()) + " supports at most " +
                                std::to_string(feasible) + " scales with filter " + std::to_string(eff) + ", " +
                                std::to_string(weights.size()) + " requested");
    double weight_sum = 0.0;
    for (double w : weights) weight_sum += w;
    double product = 1.0;
    const bool multi = weights.size() > 1;
    Tensor a = x, b = y;
    for (std::size_t j = 0; j < weights.size(); ++j) {
        if (j > 0) {
            a = downsample2(a);
            b = downsample2(b);
        }
        double s = ssim(a, b, peak);
        if (multi) s = std::max(s, 0.0);
        product *= std::pow(s, weights[j] / weight_sum);
    }
    return product;
}

double ms_ssim_auto(const Tensor& x, const Tensor& y, double peak) {
    std::size_t scales = kMsSsimWeights.size();
    while (scales > 1 && ms_ssim_filter_for(x.dim(2), x.dim(1), scales) == 0) --scales;
    const std::size_t filter = ms_ssim_filter_for(x.dim(2), x.dim(1), scales);
    return ms_ssim(x, y, std::span<const double>(kMsSsimWeights.data(), scales), filter, peak);
}

}  // namespace pnoma::metrics
