// SPDX-License-Identifier: Apache-2.0
//
// User-specific projection codebook.
//
// Each user i owns an encoder projection P_i (m x nm, complex) and a decoder
// projection P'_i (nm x m). They are stored and trained in realified form:
// for P = A + iB acting on row vectors z = x + iy, the real map
//   [x y] -> [x y] * [[A, B], [-B, A]]
// reproduces zP, so enc is 2m x 2nm and dec is 2nm x 2m. After training the
// matrices are general real-linear maps; the complex structure is only
// guaranteed at initialization.
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "pnoma/rng.hpp"
#include "pnoma/tensor.hpp"

namespace pnoma {

using cplx = std::complex<double>;

/// Dense row-major complex matrix.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols);
    static ComplexMatrix identity(std::size_t d);
    /// Reads the upper-left / upper-right blocks of a realified 2r x 2c matrix.
    static ComplexMatrix from_realified(const Tensor& real);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    Tensor re() const;
    Tensor im() const;

    ComplexMatrix conj_transpose() const;
    ComplexMatrix operator*(const ComplexMatrix& rhs) const;
    ComplexMatrix row_block(std::size_t first, std::size_t count) const;
    ComplexMatrix scaled(cplx s) const;

    /// max_{ij} |a_ij - b_ij|
    double max_abs_diff(const ComplexMatrix& other) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<cplx> data_;
};

/// Realified right-multiplication matrix [[A, B], [-B, A]] (2r x 2c).
Tensor realify(const ComplexMatrix& p);

/// Right-multiplies a complex row vector, packed (re | im), by a realified matrix.
std::vector<double> realified_apply(std::span<const double> packed_row, const Tensor& real);

struct QrResult {
    ComplexMatrix q;
    ComplexMatrix r;
};

/// Householder QR of a square complex matrix, M = Q R.
QrResult householder_qr(const ComplexMatrix& m);

/// Haar-distributed d x d unitary: QR of a complex Gaussian matrix whose real
/// components are N(0, 1/(2d)), with Q post-multiplied by the phases of
/// diag(R). Resamples if any |r_ii| < 1e-12.
ComplexMatrix sample_haar_unitary(std::size_t d, RngStream& stream);

struct ProjectionPair {
    Tensor enc;  // 2m x 2nm
    Tensor dec;  // 2nm x 2m
    bool trainable = false;
};

struct CodebookState {
    std::size_t n = 1;
    std::size_t m = 1;
    std::vector<ProjectionPair> pairs;

    /// Number of trainable real scalars, by enumeration.
    std::size_t trainable_count() const;
    void validate() const;
};

/// n = 1 codebook with frozen identity projections.
CodebookState init_single_user(std::size_t m);

/// Doubles the user count: draws a Haar unitary K of size nm (new n),
/// splits its rows into K1, K2 and sets P_i <- P_i K1, P_{i+n/2} <- P_i K2,
/// P'_i <- K1^H P'_i, P'_{i+n/2} <- K2^H P'_i. All pairs become trainable.
CodebookState double_users(const CodebookState& state, RngStream& stream);

/// (2m, H', W') latent -> (2nm, H', W') projected latent.
Tensor apply_enc(const Tensor& latent, const ProjectionPair& pair);
/// (2nm, H', W') received tensor -> (2m, H', W').
Tensor apply_dec(const Tensor& received, const ProjectionPair& pair);

/// Trainable scalars across all pairs: 8 n^2 m^2 for n > 1, 0 for n = 1.
std::size_t projection_param_count(std::size_t n, std::size_t m);

/// max |R R^T - I| of a realified matrix with orthonormal rows.
double row_orthonormality_error(const Tensor& realified);
/// max |A B^T| for realified A, B (cross-correlation of rows).
double cross_correlation_max(const Tensor& a, const Tensor& b);

}  // namespace pnoma
