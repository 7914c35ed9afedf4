// SPDX-License-Identifier: Apache-2.0
#include "pnoma/ops.hpp"

#include <cmath>
#include <numeric>

#include "pnoma/errors.hpp"

namespace pnoma::ops {

namespace {

using detail::Node;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

bool wants(const Node& n, std::size_t i) { return n.parents.size() > i && n.parents[i]->requires_grad; }

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            c[i * n + j] += s;
        }
    }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct ConvGeom {
    std::size_t channels, height, width;  // image side
    std::size_t kernel, stride, pad;
    std::size_t out_h, out_w;  // patch grid
    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return out_h * out_w; }
};

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
    if (in + 2 * p < k) throw ContractViolation("conv: kernel larger than padded input");
    return (in + 2 * p - k) / s + 1;
}

std::vector<double> im2col(std::span<const double> img, const ConvGeom& g) {
    std::vector<double> cols(g.rows() * g.cols(), 0.0);
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                double* dst = cols.data() + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
                        dst[oy * g.out_w + ox] = img[(c * g.height + iy) * g.width + ix];
                    }
                }
            }
    return cols;
}

void col2im(std::span<const double> cols, const ConvGeom& g, std::span<double> img) {
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const double* src = cols.data() + ((c * g.kernel + ki) * g.kernel + kj) * g.cols();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
                        img[(c * g.height + iy) * g.width + ix] += src[oy * g.out_w + ox];
                    }
                }
            }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    return make_op("add", a.shape(), std::move(v), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < 2; ++i)
            if (wants(n, i)) n.parents[i]->accumulate(n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    return make_op("sub", a.shape(), std::move(v), {a, b}, [](Node& n) {
        if (wants(n, 0)) n.parents[0]->accumulate(n.grad);
        if (wants(n, 1)) {
            auto& g = n.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
    return make_op("mul", a.shape(), std::move(v), {a, b}, [](Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (wants(n, 0)) {
            auto& g = n.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (wants(n, 1)) {
            auto& g = n.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * c;
    return make_op("scale", a.shape(), std::move(v), {a}, [c](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
    });
}

Tensor div_detached(const Tensor& a, double s) {
    if (s == 0.0) throw ContractViolation("div_detached: division by zero");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] / s;
    return make_op("div_detached", a.shape(), std::move(v), {a}, [s](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / s;
    });
}

Tensor broadcast(const Tensor& s, const Shape& shape) {
    if (s.numel() != 1) throw ContractViolation("broadcast: source must hold one element");
    std::vector<double> v(shape_numel(shape), s.item());
    return make_op("broadcast", shape, std::move(v), {s}, [](Node& n) {
        n.parents[0]->grad_buffer()[0] += std::accumulate(n.grad.begin(), n.grad.end(), 0.0);
    });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    return make_op("leaky_relu", x.shape(), std::move(v), {x}, [slope](Node& n) {
        const auto& xv = n.parents[0]->value;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (xv[i] > 0.0 ? 1.0 : slope);
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return make_op("sigmoid", x.shape(), std::move(v), {x}, [](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

Tensor sum(const Tensor& x) {
    const auto d = x.data();
    const double s = std::accumulate(d.begin(), d.end(), 0.0);
    return make_op("sum", {1}, {s}, {x}, [](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (auto& gi : g) gi += n.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    const auto d = x.data();
    const double count = static_cast<double>(d.size());
    const double s = std::accumulate(d.begin(), d.end(), 0.0) / count;
    return make_op("mean", {1}, {s}, {x}, [count](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (auto& gi : g) gi += n.grad[0] / count;
    });
}

Tensor l2_sq(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    return make_op("l2_sq", {1}, {s}, {x}, [](Node& n) {
        const auto& xv = n.parents[0]->value;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * xv[i] * n.grad[0];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ContractViolation("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    return make_op("reshape", std::move(shape), x.to_vector(), {x},
                   [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractViolation("concat_channels: no inputs");
    const auto& first = parts.front().shape();
    if (first.size() != 3) throw ContractViolation("concat_channels: expected (C,H,W) tensors");
    std::size_t channels = 0;
    for (const auto& p : parts) {
        if (p.rank() != 3 || p.dim(1) != first[1] || p.dim(2) != first[2])
            throw ContractViolation("concat_channels: spatial mismatch " + shape_str(p.shape()) + " vs " +
                                    shape_str(first));
        channels += p.dim(0);
    }
    std::vector<double> v;
    v.reserve(channels * first[1] * first[2]);
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
        v.insert(v.end(), p.data().begin(), p.data().end());
        sizes.push_back(p.numel());
    }
    return make_op("concat_channels", {channels, first[1], first[2]}, std::move(v),
                   std::vector<Tensor>(parts.begin(), parts.end()), [sizes](Node& n) {
                       std::size_t off = 0;
                       for (std::size_t i = 0; i < sizes.size(); ++i) {
                           if (wants(n, i))
                               n.parents[i]->accumulate(std::span<const double>(n.grad).subspan(off, sizes[i]));
                           off += sizes[i];
                       }
                   });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat_channels(parts);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ContractViolation("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> v(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), v.data(), m, k, n);
    return make_op("matmul", {m, n}, std::move(v), {a, b}, [m, k, n](Node& node) {
        const double* av = node.parents[0]->value.data();
        const double* bv = node.parents[1]->value.data();
        if (wants(node, 0)) gemm_nt(node.grad.data(), bv, node.parents[0]->grad_buffer().data(), m, n, k);
        if (wants(node, 1)) gemm_tn(av, node.grad.data(), node.parents[1]->grad_buffer().data(), k, m, n);
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ContractViolation("transpose: expected a matrix, got " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> v(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v[j * r + i] = a[i * c + j];
    return make_op("transpose", {c, r}, std::move(v), {a}, [r, c](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3) || b.rank() != 1 ||
        b.dim(0) != w.dim(0) || stride == 0)
        throw ContractViolation("conv2d: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()) +
                                ", bias " + shape_str(b.shape()));
    const std::size_t out_ch = w.dim(0);
    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), w.dim(2), stride, pad, 0, 0};
    g.out_h = conv_out(g.height, g.kernel, stride, pad);
    g.out_w = conv_out(g.width, g.kernel, stride, pad);
    auto cols = im2col(x.data(), g);
    std::vector<double> v(out_ch * g.cols(), 0.0);
    for (std::size_t o = 0; o < out_ch; ++o)
        std::fill_n(v.begin() + static_cast<long>(o * g.cols()), g.cols(), b[o]);
    gemm_nn(w.data().data(), cols.data(), v.data(), out_ch, g.rows(), g.cols());
    return make_op("conv2d", {out_ch, g.out_h, g.out_w}, std::move(v), {x, w, b},
                   [g, out_ch, cols = std::move(cols)](Node& n) {
                       const double* gout = n.grad.data();
                       if (wants(n, 1))
                           gemm_nt(gout, cols.data(), n.parents[1]->grad_buffer().data(), out_ch, g.cols(),
                                   g.rows());
                       if (wants(n, 2)) {
                           auto& gb = n.parents[2]->grad_buffer();
                           for (std::size_t o = 0; o < out_ch; ++o)
                               gb[o] += std::accumulate(gout + o * g.cols(), gout + (o + 1) * g.cols(), 0.0);
                       }
                       if (wants(n, 0)) {
                           std::vector<double> dcols(g.rows() * g.cols(), 0.0);
                           gemm_tn(n.parents[1]->value.data(), gout, dcols.data(), g.rows(), out_ch, g.cols());
                           col2im(dcols, g, n.parents[0]->grad_buffer());
                       }
                   });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                        std::size_t pad, std::size_t out_pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(0) != x.dim(0) || w.dim(2) != w.dim(3) || b.rank() != 1 ||
        b.dim(0) != w.dim(1) || stride == 0 || out_pad >= stride)
        throw ContractViolation("conv_transpose2d: input " + shape_str(x.shape()) + ", weight " +
                                shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
    const std::size_t in_ch = x.dim(0), out_ch = w.dim(1), k = w.dim(2);
    const long oh = static_cast<long>((x.dim(1) - 1) * stride + k + out_pad) - 2 * static_cast<long>(pad);
    const long ow = static_cast<long>((x.dim(2) - 1) * stride + k + out_pad) - 2 * static_cast<long>(pad);
    if (oh <= 0 || ow <= 0) throw ContractViolation("conv_transpose2d: empty output");
    // Geometry of the equivalent forward convolution from the output image back to x.
    ConvGeom g{out_ch, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), k, stride, pad, x.dim(1),
               x.dim(2)};
    std::vector<double> cols(g.rows() * g.cols(), 0.0);
    gemm_tn(w.data().data(), x.data().data(), cols.data(), g.rows(), in_ch, g.cols());
    std::vector<double> v(out_ch * g.height * g.width, 0.0);
    col2im(cols, g, v);
    const std::size_t plane = g.height * g.width;
    for (std::size_t o = 0; o < out_ch; ++o)
        for (std::size_t i = 0; i < plane; ++i) v[o * plane + i] += b[o];
    return make_op("conv_transpose2d", {out_ch, g.height, g.width}, std::move(v), {x, w, b},
                   [g, in_ch, out_ch, plane](Node& n) {
                       const auto gcols = im2col(n.grad, g);
                       if (wants(n, 0))
                           gemm_nn(n.parents[1]->value.data(), gcols.data(),
                                   n.parents[0]->grad_buffer().data(), in_ch, g.rows(), g.cols());
                       if (wants(n, 1))
                           gemm_nt(n.parents[0]->value.data(), gcols.data(),
                                   n.parents[1]->grad_buffer().data(), in_ch, g.cols(), g.rows());
                       if (wants(n, 2)) {
                           auto& gb = n.parents[2]->grad_buffer();
                           for (std::size_t o = 0; o < out_ch; ++o)
                               gb[o] += std::accumulate(n.grad.begin() + static_cast<long>(o * plane),
                                                        n.grad.begin() + static_cast<long>((o + 1) * plane), 0.0);
                       }
                   });
}

Tensor normalize_power(const Tensor& z, std::size_t k, double power) {
    if (z.numel() != 2 * k) throw ContractViolation("normalize_power: expected 2k = " + std::to_string(2 * k) +
                                                    " reals, got " + std::to_string(z.numel()));
    if (!(power > 0.0)) throw ContractViolation("normalize_power: power must be positive");
    double sq = 0.0;
    for (double v : z.data()) sq += v * v;
    if (sq == 0.0) throw DegenerateInput("normalize_power: zero input vector");
    const double norm = std::sqrt(sq);
    const double target = std::sqrt(static_cast<double>(k) * power);
    const double c = target / norm;
    std::vector<double> v(z.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = z[i] * c;
    // y = target * z / |z|;  dL/dz = c * (g - z (z.g) / |z|^2)
    return make_op("normalize_power", z.shape(), std::move(v), {z}, [c, sq](Node& n) {
        const auto& zv = n.parents[0]->value;
        double dot = 0.0;
        for (std::size_t i = 0; i < zv.size(); ++i) dot += zv[i] * n.grad[i];
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * (n.grad[i] - zv[i] * dot / sq);
    });
}

Tensor complex_gain(const Tensor& z, std::complex<double> h) {
    if (z.numel() % 2 != 0) throw ContractViolation("complex_gain: odd-length (re|im) vector");
    const std::size_t k = z.numel() / 2;
    const double a = h.real(), b = h.imag();
    std::vector<double> v(z.numel());
    for (std::size_t i = 0; i < k; ++i) {
        v[i] = a * z[i] - b * z[k + i];
        v[k + i] = b * z[i] + a * z[k + i];
    }
    return make_op("complex_gain", z.shape(), std::move(v), {z}, [k, a, b](Node& n) {
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < k; ++i) {
            g[i] += a * n.grad[i] + b * n.grad[k + i];
            g[k + i] += -b * n.grad[i] + a * n.grad[k + i];
        }
    });
}

Tensor mse(const Tensor& x, const Tensor& y) {
    const Tensor d = sub(x, y);
    return div_detached(l2_sq(d), static_cast<double>(d.numel()));
}

}  // namespace pnoma::ops
