// SPDX-License-Identifier: Apache-2.0
#include "pnoma/channel.hpp"

#include <cmath>
#include <numbers>

#include "pnoma/errors.hpp"
#include "pnoma/ops.hpp"

namespace pnoma {

std::string to_string(ChannelKind kind) { return kind == ChannelKind::Awgn ? "awgn" : "rayleigh"; }

ChannelKind channel_kind_from_string(const std::string& name) {
    if (name == "awgn") return ChannelKind::Awgn;
    if (name == "rayleigh") return ChannelKind::Rayleigh;
    throw ConfigError("unknown channel kind '" + name + "' (expected awgn or rayleigh)");
}

ComplexVector::ComplexVector(Tensor packed) : packed_(std::move(packed)) {
    if (packed_.numel() % 2 != 0)
        throw ContractViolation("ComplexVector: packed tensor must have even length, got " +
                                std::to_string(packed_.numel()));
}

ComplexVector ComplexVector::from_parts(std::span<const double> re, std::span<const double> im) {
    if (re.size() != im.size()) throw ContractViolation("ComplexVector: re/im length mismatch");
    std::vector<double> v(re.begin(), re.end());
    v.insert(v.end(), im.begin(), im.end());
    const std::size_t len = v.size();
    return ComplexVector(Tensor::from({len}, std::move(v)));
}

ComplexVector ComplexVector::zeros(std::size_t k) { return ComplexVector(Tensor::zeros({2 * k})); }

std::vector<double> ComplexVector::re() const {
    auto d = packed_.data();
    return {d.begin(), d.begin() + static_cast<long>(size())};
}

std::vector<double> ComplexVector::im() const {
    auto d = packed_.data();
    return {d.begin() + static_cast<long>(size()), d.end()};
}

std::complex<double> ComplexVector::at(std::size_t i) const {
    return {packed_[i], packed_[size() + i]};
}

double ComplexVector::mean_power() const {
    double s = 0.0;
    for (double v : packed_.data()) s += v * v;
    return s / static_cast<double>(size());
}

void ChannelRealization::validate() const {
    if (!(sigma >= 0.0)) throw ContractViolation("channel: sigma must be non-negative");
    if (kind == ChannelKind::Awgn)
        for (const auto& h : gains)
            if (h != std::complex<double>(1.0, 0.0))
                throw ContractViolation("channel: AWGN realization requires unit gains");
}

double snr_to_sigma2(double snr_db, double p) {
    if (!(p > 0.0)) throw ContractViolation("snr_to_sigma2: reference power must be positive");
    return p / std::pow(10.0, snr_db / 10.0);
}

double sigma2_to_snr(double sigma2, double p) {
    if (!(p > 0.0)) throw ContractViolation("sigma2_to_snr: reference power must be positive");
    return 10.0 * std::log10(p / sigma2);
}

ComplexVector power_normalize(const ComplexVector& z_raw, std::size_t k, double p_tx) {
    if (z_raw.size() != k)
        throw ContractViolation("power_normalize: vector has " + std::to_string(z_raw.size()) + " symbols, k = " +
                                std::to_string(k));
    return ComplexVector(ops::normalize_power(z_raw.packed(), k, p_tx));
}

std::vector<std::complex<double>> sample_gains(ChannelKind kind, std::size_t n_users, RngStream& stream) {
    if (n_users == 0) throw ContractViolation("sample_gains: n_users must be at least 1");
    std::vector<std::complex<double>> gains(n_users, {1.0, 0.0});
    if (kind == ChannelKind::Rayleigh) {
        const double s = std::numbers::sqrt2 / 2.0;
        for (auto& h : gains) {
            const double re = s * stream.normal();
            const double im = s * stream.normal();
            h = {re, im};
        }
    }
    return gains;
}

ComplexVector sample_noise(std::size_t k, double sigma, RngStream& stream) {
    if (!(sigma >= 0.0)) throw ContractViolation("sample_noise: sigma must be non-negative");
    const double s = sigma / std::numbers::sqrt2;
    std::vector<double> v(2 * k);
    for (auto& x : v) x = s * stream.normal();
    return ComplexVector(Tensor::from({2 * k}, std::move(v)));
}

ComplexVector transmit_with_noise(std::span<const ComplexVector> z_list,
                                  std::span<const std::complex<double>> gains, const ComplexVector& noise) {
    if (z_list.empty()) throw ContractViolation("transmit: no users");
    if (gains.size() != z_list.size())
        throw ContractViolation("transmit: " + std::to_string(gains.size()) + " gains for " +
                                std::to_string(z_list.size()) + " users");
    const std::size_t k = z_list.front().size();
    for (const auto& z : z_list)
        if (z.size() != k) throw ContractViolation("transmit: users disagree on symbol count");
    if (noise.size() != k) throw ContractViolation("transmit: noise length mismatch");

    Tensor y = noise.packed();
    for (std::size_t i = 0; i < z_list.size(); ++i) {
        const Tensor& z = z_list[i].packed();
        y = ops::add(y, gains[i] == std::complex<double>(1.0, 0.0) ? z : ops::complex_gain(z, gains[i]));
    }
    return ComplexVector(y);
}

ComplexVector transmit(std::span<const ComplexVector> z_list, const ChannelRealization& realization,
                       RngStream& stream) {
    realization.validate();
    if (z_list.empty()) throw ContractViolation("transmit: no users");
    const auto noise = sample_noise(z_list.front().size(), realization.sigma, stream);
    return transmit_with_noise(z_list, realization.gains, noise);
}

}  // namespace pnoma
