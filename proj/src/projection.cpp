// SPDX-License-Identifier: Apache-2.0
#include "pnoma/projection.hpp"

#include <algorithm>
#include <cmath>

#include "pnoma/errors.hpp"
#include "pnoma/ops.hpp"

namespace pnoma {

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, cplx{0.0, 0.0}) {}

ComplexMatrix ComplexMatrix::identity(std::size_t d) {
    ComplexMatrix m(d, d);
    for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
}

ComplexMatrix ComplexMatrix::from_realified(const Tensor& real) {
    if (real.rank() != 2 || real.dim(0) % 2 != 0 || real.dim(1) % 2 != 0)
        throw ContractViolation("from_realified: expected a 2r x 2c matrix, got " + shape_str(real.shape()));
    const std::size_t r = real.dim(0) / 2, c = real.dim(1) / 2, stride = real.dim(1);
    ComplexMatrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = {real[i * stride + j], real[i * stride + c + j]};
    return m;
}

Tensor ComplexMatrix::re() const {
    std::vector<double> v(data_.size());
    std::transform(data_.begin(), data_.end(), v.begin(), [](const cplx& z) { return z.real(); });
    return Tensor::from({rows_, cols_}, std::move(v));
}

Tensor ComplexMatrix::im() const {
    std::vector<double> v(data_.size());
    std::transform(data_.begin(), data_.end(), v.begin(), [](const cplx& z) { return z.imag(); });
    return Tensor::from({rows_, cols_}, std::move(v));
}

ComplexMatrix ComplexMatrix::conj_transpose() const {
    ComplexMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = std::conj((*this)(i, j));
    return t;
}

ComplexMatrix ComplexMatrix::operator*(const ComplexMatrix& rhs) const {
    if (cols_ != rhs.rows_) throw ContractViolation("ComplexMatrix: inner dimension mismatch");
    ComplexMatrix out(rows_, rhs.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t p = 0; p < cols_; ++p) {
            const cplx a = (*this)(i, p);
            for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(p, j);
        }
    return out;
}

ComplexMatrix ComplexMatrix::row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows_) throw ContractViolation("ComplexMatrix::row_block out of range");
    ComplexMatrix out(count, cols_);
    std::copy_n(data_.begin() + static_cast<long>(first * cols_), count * cols_, out.data_.begin());
    return out;
}

ComplexMatrix ComplexMatrix::scaled(cplx s) const {
    ComplexMatrix out = *this;
    for (auto& z : out.data_) z *= s;
    return out;
}

double ComplexMatrix::max_abs_diff(const ComplexMatrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw ContractViolation("ComplexMatrix::max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::abs(data_[i] - other.data_[i]));
    return m;
}

Tensor realify(const ComplexMatrix& p) {
    const std::size_t r = p.rows(), c = p.cols(), stride = 2 * c;
    std::vector<double> v(4 * r * c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double a = p(i, j).real(), b = p(i, j).imag();
            v[i * stride + j] = a;
            v[i * stride + c + j] = b;
            v[(r + i) * stride + j] = -b;
            v[(r + i) * stride + c + j] = a;
        }
    return Tensor::from({2 * r, 2 * c}, std::move(v));
}

std::vector<double> realified_apply(std::span<const double> packed_row, const Tensor& real) {
    if (real.rank() != 2 || packed_row.size() != real.dim(0))
        throw ContractViolation("realified_apply: row of length " + std::to_string(packed_row.size()) +
                                " against " + shape_str(real.shape()));
    const std::size_t cols = real.dim(1);
    std::vector<double> out(cols, 0.0);
    for (std::size_t i = 0; i < packed_row.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j] += packed_row[i] * real[i * cols + j];
    return out;
}

QrResult householder_qr(const ComplexMatrix& m) {
    if (m.rows() != m.cols()) throw ContractViolation("householder_qr: square input required");
    const std::size_t d = m.rows();
    ComplexMatrix r = m;
    ComplexMatrix q = ComplexMatrix::identity(d);
    std::vector<cplx> v(d);
    for (std::size_t j = 0; j < d; ++j) {
        double norm_sq = 0.0;
        for (std::size_t i = j; i < d; ++i) norm_sq += std::norm(r(i, j));
        const double norm = std::sqrt(norm_sq);
        if (norm == 0.0) continue;  // column already zero below the diagonal; r_jj = 0
        const cplx x0 = r(j, j);
        const cplx phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : cplx{1.0, 0.0};
        const cplx alpha = -phase * norm;
        std::fill(v.begin(), v.end(), cplx{0.0, 0.0});
        for (std::size_t i = j; i < d; ++i) v[i] = r(i, j);
        v[j] -= alpha;
        double v_norm_sq = 0.0;
        for (std::size_t i = j; i < d; ++i) v_norm_sq += std::norm(v[i]);
        if (v_norm_sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(v_norm_sq);
        for (std::size_t i = j; i < d; ++i) v[i] *= inv;
        // R <- (I - 2 v v^H) R on rows j.., columns j..
        for (std::size_t c = j; c < d; ++c) {
            cplx s{0.0, 0.0};
            for (std::size_t i = j; i < d; ++i) s += std::conj(v[i]) * r(i, c);
            for (std::size_t i = j; i < d; ++i) r(i, c) -= 2.0 * v[i] * s;
        }
        // Q <- Q (I - 2 v v^H)
        for (std::size_t row = 0; row < d; ++row) {
            cplx s{0.0, 0.0};
            for (std::size_t i = j; i < d; ++i) s += q(row, i) * v[i];
            for (std::size_t i = j; i < d; ++i) q(row, i) -= 2.0 * s * std::conj(v[i]);
        }
        for (std::size_t i = j + 1; i < d; ++i) r(i, j) = 0.0;
    }
    return {std::move(q), std::move(r)};
}

ComplexMatrix sample_haar_unitary(std::size_t d, RngStream& stream) {
    if (d == 0) throw ContractViolation("sample_haar_unitary: dimension must be at least 1");
    const double s = std::sqrt(1.0 / (2.0 * static_cast<double>(d)));
    for (;;) {
        ComplexMatrix m(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double re = s * stream.normal();
                const double im = s * stream.normal();
                m(i, j) = {re, im};
            }
        auto [q, r] = householder_qr(m);
        bool degenerate = false;
        for (std::size_t i = 0; i < d; ++i) degenerate |= std::abs(r(i, i)) < 1e-12;
        if (degenerate) continue;
        // Q <- Q diag(r_ii / |r_ii|)
        for (std::size_t j = 0; j < d; ++j) {
            const cplx phase = r(j, j) / std::abs(r(j, j));
            for (std::size_t i = 0; i < d; ++i) q(i, j) *= phase;
        }
        return q;
    }
}

namespace {

Tensor real_product(const Tensor& a, const Tensor& b) {
    NoGradGuard guard;
    return ops::matmul(a, b).detach();
}

}  // namespace

std::size_t CodebookState::trainable_count() const {
    std::size_t total = 0;
    for (const auto& p : pairs)
        if (p.trainable) total += p.enc.numel() + p.dec.numel();
    return total;
}

void CodebookState::validate() const {
    if (n == 0 || (n & (n - 1)) != 0) throw ContractViolation("codebook: user count must be a power of two");
    if (pairs.size() != n) throw ContractViolation("codebook: expected one projection pair per user");
    for (const auto& p : pairs) {
        if (p.enc.shape() != Shape{2 * m, 2 * n * m} || p.dec.shape() != Shape{2 * n * m, 2 * m})
            throw ContractViolation("codebook: projection shapes " + shape_str(p.enc.shape()) + "/" +
                                    shape_str(p.dec.shape()) + " do not match n=" + std::to_string(n) +
                                    ", m=" + std::to_string(m));
    }
}

CodebookState init_single_user(std::size_t m) {
    if (m == 0) throw ContractViolation("init_single_user: m must be at least 1");
    const Tensor eye = realify(ComplexMatrix::identity(m));
    return CodebookState{1, m, {ProjectionPair{eye.detach(), eye.detach(), false}}};
}

CodebookState double_users(const CodebookState& state, RngStream& stream) {
    state.validate();
    const std::size_t half = state.n;
    const std::size_t n = 2 * half;
    const std::size_t m = state.m;
    const ComplexMatrix k = sample_haar_unitary(n * m, stream);
    const ComplexMatrix k1 = k.row_block(0, half * m);
    const ComplexMatrix k2 = k.row_block(half * m, half * m);
    const Tensor k1_r = realify(k1), k2_r = realify(k2);
    const Tensor k1h_r = realify(k1.conj_transpose()), k2h_r = realify(k2.conj_transpose());

    CodebookState out{n, m, std::vector<ProjectionPair>(n)};
    for (std::size_t i = 0; i < half; ++i) {
        const auto& old = state.pairs[i];
        out.pairs[i].enc = real_product(old.enc, k1_r);
        out.pairs[i].dec = real_product(k1h_r, old.dec);
        out.pairs[i + half].enc = real_product(old.enc, k2_r);
        out.pairs[i + half].dec = real_product(k2h_r, old.dec);
    }
    for (auto& p : out.pairs) {
        p.enc.set_requires_grad(true);
        p.dec.set_requires_grad(true);
        p.trainable = true;
    }
    return out;
}

Tensor apply_enc(const Tensor& latent, const ProjectionPair& pair) {
    if (latent.rank() != 3 || latent.dim(0) != pair.enc.dim(0))
        throw ContractViolation("apply_enc: latent " + shape_str(latent.shape()) + " vs projection " +
                                shape_str(pair.enc.shape()));
    const std::size_t h = latent.dim(1), w = latent.dim(2);
    const Tensor flat = ops::reshape(latent, {latent.dim(0), h * w});
    const Tensor out = ops::matmul(ops::transpose(pair.enc), flat);
    return ops::reshape(out, {pair.enc.dim(1), h, w});
}

Tensor apply_dec(const Tensor& received, const ProjectionPair& pair) {
    if (received.rank() != 3 || received.dim(0) != pair.dec.dim(0))
        throw ContractViolation("apply_dec: input " + shape_str(received.shape()) + " vs projection " +
                                shape_str(pair.dec.shape()));
    const std::size_t h = received.dim(1), w = received.dim(2);
    const Tensor flat = ops::reshape(received, {received.dim(0), h * w});
    const Tensor out = ops::matmul(ops::transpose(pair.dec), flat);
    return ops::reshape(out, {pair.dec.dim(1), h, w});
}

std::size_t projection_param_count(std::size_t n, std::size_t m) {
    if (n == 0 || (n & (n - 1)) != 0) throw ContractViolation("projection_param_count: n must be a power of two");
    return n == 1 ? 0 : 8 * n * n * m * m;
}

double row_orthonormality_error(const Tensor& realified) {
    const std::size_t r = realified.dim(0), c = realified.dim(1);
    double worst = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < c; ++p) s += realified[i * c + p] * realified[j * c + p];
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    return worst;
}

double cross_correlation_max(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ContractViolation("cross_correlation_max: column mismatch");
    const std::size_t c = a.dim(1);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(0); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < c; ++p) s += a[i * c + p] * b[j * c + p];
            worst = std::max(worst, std::abs(s));
        }
    return worst;
}

}  // namespace pnoma
