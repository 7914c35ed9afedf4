// SPDX-License-Identifier: Apache-2.0
//
// Shared-parameter convolutional autoencoder and the multi-user forward pass.
//
// Encoder: conv(C_in+3 -> F, 3x3, s2) -> lrelu -> [conv(F -> F, 3x3, s2) -> lrelu]
//          ... -> conv(F -> 2m, 3x3, s1)
// Decoder: conv(2m+3 -> F, 3x3, s1) -> lrelu -> [convT(F -> F, 3x3, s2) -> lrelu]
//          ... -> convT(F -> C_in, 3x3, s2) -> sigmoid
// The three extra input channels are constant planes (Re h, Im h, snr_db/20).
// Latents are (2m, H', W') with the first m channels holding real parts.
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnoma/channel.hpp"
#include "pnoma/grad_check.hpp"
#include "pnoma/projection.hpp"
#include "pnoma/rng.hpp"
#include "pnoma/tensor.hpp"

namespace pnoma {

struct Rational {
    std::int64_t num = 1;
    std::int64_t den = 1;

    /// Parses "a/b" or an integer.
    static Rational parse(const std::string& text);
    std::string str() const;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Rational&) const = default;
};

enum class SystemMode {
    Pnoma,       // all users superpose on one MAC
    PerfectSic,  // each user sees a private interference-free channel
};

std::string to_string(SystemMode mode);
SystemMode system_mode_from_string(const std::string& name);

struct SystemConfig {
    std::size_t n = 1;
    Rational rho_bar{1, 6};
    double p_bar = 1.0;
    std::size_t width = 16;
    std::size_t height = 16;
    std::size_t in_channels = 3;
    std::size_t downsample = 2;
    std::size_t filters = 32;
    SystemMode mode = SystemMode::Pnoma;

    /// Throws ConfigError on non-integer m, non-power-of-two n, or image
    /// sizes not divisible by 2^downsample.
    void validate() const;

    std::size_t m() const;  // filters per user = C_in * rho_bar * 4^c
    std::size_t latent_height() const { return height >> downsample; }
    std::size_t latent_width() const { return width >> downsample; }
    std::size_t k() const;  // total complex symbols = n * m * H' * W'
    double p_tx() const { return p_bar / static_cast<double>(n); }
};

struct Conv {
    Tensor weight;
    Tensor bias;
};

/// One copy of the encoder (Theta) and decoder (Phi) shared by every user.
struct ModelParams {
    std::vector<Conv> encoder;
    std::vector<Conv> decoder;

    std::vector<NamedTensor> encoder_named() const;
    std::vector<NamedTensor> decoder_named() const;
    std::size_t encoder_count() const;
    std::size_t decoder_count() const;
};

ModelParams init_params(const SystemConfig& config, RngStream& stream);

/// Deep copy (fresh leaves with identical values).
ModelParams clone(const ModelParams& params);
CodebookState clone(const CodebookState& codebook);

struct Conditioning {
    std::complex<double> h{1.0, 0.0};
    double snr_db = 10.0;
};

Tensor encode(const Tensor& image, const Conditioning& cond, const ModelParams& params, const SystemConfig& config);
Tensor decode(const Tensor& latent, const Conditioning& cond, const ModelParams& params, const SystemConfig& config);

struct SystemModel {
    SystemConfig config;
    ModelParams params;
    CodebookState codebook;

    /// Theta, Phi and the trainable projections, with stable names.
    std::vector<NamedTensor> trainable() const;
    std::size_t trainable_count() const;
    SystemModel clone() const;
};

SystemModel make_system(const SystemConfig& config, RngStream& init_stream);

struct ChannelDraw {
    std::vector<std::complex<double>> gains;  // one per user
    double snr_db = 10.0;                     // conditioning value fed to encoder and decoder
    double sigma = 0.0;                       // noise std per complex dimension
};

/// Draw for a nominal SNR: sigma from snr_db against p_bar.
ChannelDraw make_draw(std::vector<std::complex<double>> gains, double snr_db, double p_bar);

struct ForwardOptions {
    /// Users not marked active transmit exact zeros and are not decoded.
    std::optional<std::vector<bool>> active;
};

struct SystemOutput {
    std::vector<Tensor> reconstructions;  // undefined for inactive users
    std::vector<ComplexVector> transmitted;
    std::vector<ComplexVector> received;  // one MAC output, or one per user in Perfect-SIC mode
    std::vector<Tensor> decoder_inputs;   // per-user (2m, H', W') after apply_dec
};

/// Encode, project, normalize, transmit, de-project and decode for all users.
SystemOutput forward_system(std::span<const Tensor> images, const SystemModel& model, const ChannelDraw& draw,
                            RngStream& noise_stream, const ForwardOptions& options = {});

}  // namespace pnoma
