// SPDX-License-Identifier: Apache-2.0
//
// Multiple-access channel y = sum_i h_i z_i + n over k complex symbols.
//
// Complex vectors are carried as one real tensor of length 2k laid out as
// (re_0..re_{k-1} | im_0..im_{k-1}), which is also the flattened form of a
// (2F, H, W) latent whose first F channels are real parts.
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pnoma/rng.hpp"
#include "pnoma/tensor.hpp"

namespace pnoma {

enum class ChannelKind { Awgn, Rayleigh };

std::string to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& name);

class ComplexVector {
public:
    ComplexVector() = default;
    /// Wraps a flat (re | im) tensor of length 2k.
    explicit ComplexVector(Tensor packed);
    static ComplexVector from_parts(std::span<const double> re, std::span<const double> im);
    static ComplexVector zeros(std::size_t k);

    std::size_t size() const { return packed_.numel() / 2; }
    const Tensor& packed() const { return packed_; }
    std::vector<double> re() const;
    std::vector<double> im() const;
    std::complex<double> at(std::size_t i) const;
    /// (1/k) * ||z||^2
    double mean_power() const;

private:
    Tensor packed_;
};

struct ChannelRealization {
    std::vector<std::complex<double>> gains;
    double sigma = 0.0;  // noise std per complex dimension
    ChannelKind kind = ChannelKind::Awgn;

    /// Throws ContractViolation when sigma < 0 or an AWGN gain differs from 1.
    void validate() const;
};

/// Per-symbol transmit power when n users share the band: p_tx = p_bar / n.
struct PowerBudget {
    double p_bar = 1.0;
    std::size_t n_users = 1;
    std::size_t k = 1;

    double p_tx() const { return p_bar / static_cast<double>(n_users); }
};

/// sigma^2 = p / 10^(snr_db / 10).
double snr_to_sigma2(double snr_db, double p);
double sigma2_to_snr(double sigma2, double p);

/// Rescales z_raw so that (1/k) ||z||^2 == p_tx. Differentiable.
/// Throws DegenerateInput on an all-zero vector.
ComplexVector power_normalize(const ComplexVector& z_raw, std::size_t k, double p_tx);

/// AWGN: all 1+0i. Rayleigh: i.i.d. CN(0, 1), components N(0, 1/2).
std::vector<std::complex<double>> sample_gains(ChannelKind kind, std::size_t n_users, RngStream& stream);

/// CN(0, sigma^2 I_k) noise; each real component has variance sigma^2 / 2.
ComplexVector sample_noise(std::size_t k, double sigma, RngStream& stream);

/// y = sum_i h_i z_i + noise, with an explicit noise vector (treated as a constant).
ComplexVector transmit_with_noise(std::span<const ComplexVector> z_list,
                                  std::span<const std::complex<double>> gains, const ComplexVector& noise);

/// y = sum_i h_i z_i + n, n drawn from `stream`.
ComplexVector transmit(std::span<const ComplexVector> z_list, const ChannelRealization& realization,
                       RngStream& stream);

}  // namespace pnoma
