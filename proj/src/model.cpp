// SPDX-License-Identifier: Apache-2.0
#include "pnoma/model.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#include "pnoma/errors.hpp"
#include "pnoma/ops.hpp"

namespace pnoma {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr std::size_t kKernel = 3;
constexpr std::size_t kCondChannels = 3;

std::int64_t parse_int(std::string_view s, const std::string& whole) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("invalid rational '" + whole + "'");
    return v;
}

Conv make_conv(std::size_t out_ch, std::size_t in_ch, bool transposed, RngStream& stream) {
    const std::size_t fan_in = (transposed ? out_ch : in_ch) * kKernel * kKernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const Shape wshape = transposed ? Shape{in_ch, out_ch, kKernel, kKernel} : Shape{out_ch, in_ch, kKernel, kKernel};
    std::vector<double> w(shape_numel(wshape));
    for (auto& v : w) v = stream.uniform(-bound, bound);
    std::vector<double> b(out_ch);
    for (auto& v : b) v = stream.uniform(-bound, bound);
    return Conv{Tensor::parameter(wshape, std::move(w)), Tensor::parameter({out_ch}, std::move(b))};
}

Tensor condition_planes(const Conditioning& cond, std::size_t h, std::size_t w) {
    const std::size_t plane = h * w;
    std::vector<double> v(kCondChannels * plane);
    std::fill_n(v.begin(), plane, cond.h.real());
    std::fill_n(v.begin() + static_cast<long>(plane), plane, cond.h.imag());
    std::fill_n(v.begin() + static_cast<long>(2 * plane), plane, cond.snr_db / 20.0);
    return Tensor::from({kCondChannels, h, w}, std::move(v));
}

std::vector<NamedTensor> named(const std::vector<Conv>& convs, const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        out.push_back({prefix + ".conv" + std::to_string(i) + ".weight", convs[i].weight});
        out.push_back({prefix + ".conv" + std::to_string(i) + ".bias", convs[i].bias});
    }
    return out;
}

std::size_t count(const std::vector<Conv>& convs) {
    std::size_t total = 0;
    for (const auto& c : convs) total += c.weight.numel() + c.bias.numel();
    return total;
}

}  // namespace

Rational Rational::parse(const std::string& text) {
    const auto slash = text.find('/');
    Rational r;
    if (slash == std::string::npos) {
        r = {parse_int(text, text), 1};
    } else {
        r = {parse_int(std::string_view(text).substr(0, slash), text),
             parse_int(std::string_view(text).substr(slash + 1), text)};
    }
    if (r.num <= 0 || r.den <= 0) throw ConfigError("rational '" + text + "' must be positive");
    const auto g = std::gcd(r.num, r.den);
    return {r.num / g, r.den / g};
}

std::string Rational::str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

std::string to_string(SystemMode mode) { return mode == SystemMode::Pnoma ? "pnoma" : "perfect_sic"; }

SystemMode system_mode_from_string(const std::string& name) {
    if (name == "pnoma") return SystemMode::Pnoma;
    if (name == "perfect_sic") return SystemMode::PerfectSic;
    throw ConfigError("unknown system mode '" + name + "' (expected pnoma or perfect_sic)");
}

void SystemConfig::validate() const {
    if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("n must be a power of two, got " + std::to_string(n));
    if (rho_bar.num <= 0 || rho_bar.den <= 0) throw ConfigError("rho_bar must be positive");
    if (!(p_bar > 0.0)) throw ConfigError("p_bar must be positive");
    if (in_channels == 0 || filters == 0) throw ConfigError("channel counts must be positive");
    if (downsample == 0 || downsample > 8) throw ConfigError("downsample must be in [1, 8]");
    const std::size_t step = std::size_t{1} << downsample;
    if (width == 0 || height == 0 || width % step != 0 || height % step != 0)
        throw ConfigError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by 2^" + std::to_string(downsample));
    const std::int64_t numer = static_cast<std::int64_t>(in_channels) * rho_bar.num *
                               (std::int64_t{1} << (2 * downsample));
    if (numer % rho_bar.den != 0)
        throw ConfigError("m = " + std::to_string(in_channels) + " * " + rho_bar.str() + " * 4^" +
                          std::to_string(downsample) + " is not an integer");
}

std::size_t SystemConfig::m() const {
    validate();
    return static_cast<std::size_t>(static_cast<std::int64_t>(in_channels) * rho_bar.num *
                                    (std::int64_t{1} << (2 * downsample)) / rho_bar.den);
}

std::size_t SystemConfig::k() const { return n * m() * latent_height() * latent_width(); }

std::vector<NamedTensor> ModelParams::encoder_named() const { return named(encoder, "encoder"); }
std::vector<NamedTensor> ModelParams::decoder_named() const { return named(decoder, "decoder"); }
std::size_t ModelParams::encoder_count() const { return count(encoder); }
std::size_t ModelParams::decoder_count() const { return count(decoder); }

ModelParams init_params(const SystemConfig& config, RngStream& stream) {
    config.validate();
    const std::size_t f = config.filters, m = config.m(), c = config.downsample;
    ModelParams p;
    p.encoder.push_back(make_conv(f, config.in_channels + kCondChannels, false, stream));
    for (std::size_t i = 1; i < c; ++i) p.encoder.push_back(make_conv(f, f, false, stream));
    p.encoder.push_back(make_conv(2 * m, f, false, stream));

    p.decoder.push_back(make_conv(f, 2 * m + kCondChannels, false, stream));
    for (std::size_t i = 1; i < c; ++i) p.decoder.push_back(make_conv(f, f, true, stream));
    p.decoder.push_back(make_conv(config.in_channels, f, true, stream));
    return p;
}

ModelParams clone(const ModelParams& params) {
    ModelParams out;
    for (const auto& c : params.encoder) out.encoder.push_back({c.weight.clone_parameter(), c.bias.clone_parameter()});
    for (const auto& c : params.decoder) out.decoder.push_back({c.weight.clone_parameter(), c.bias.clone_parameter()});
    return out;
}

CodebookState clone(const CodebookState& codebook) {
    CodebookState out{codebook.n, codebook.m, {}};
    for (const auto& p : codebook.pairs)
        out.pairs.push_back({p.enc.clone_parameter(), p.dec.clone_parameter(), p.trainable});
    return out;
}

Tensor encode(const Tensor& image, const Conditioning& cond, const ModelParams& params, const SystemConfig& config) {
    if (image.shape() != Shape{config.in_channels, config.height, config.width})
        throw ContractViolation("encode: image shape " + shape_str(image.shape()) + " does not match config " +
                                shape_str({config.in_channels, config.height, config.width}));
    for (double v : image.data())
        if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation("encode: pixel values must lie in [0, 1]");
    Tensor x = ops::concat_channels(image, condition_planes(cond, config.height, config.width));
    const std::size_t last = params.encoder.size() - 1;
    for (std::size_t i = 0; i < last; ++i)
        x = ops::leaky_relu(ops::conv2d(x, params.encoder[i].weight, params.encoder[i].bias, 2, 1), kLeakySlope);
    return ops::conv2d(x, params.encoder[last].weight, params.encoder[last].bias, 1, 1);
}

Tensor decode(const Tensor& latent, const Conditioning& cond, const ModelParams& params, const SystemConfig& config) {
    const Shape expected{2 * config.m(), config.latent_height(), config.latent_width()};
    if (latent.shape() != expected)
        throw ContractViolation("decode: latent shape " + shape_str(latent.shape()) + ", expected " +
                                shape_str(expected));
    Tensor x = ops::concat_channels(latent, condition_planes(cond, expected[1], expected[2]));
    x = ops::leaky_relu(ops::conv2d(x, params.decoder[0].weight, params.decoder[0].bias, 1, 1), kLeakySlope);
    const std::size_t last = params.decoder.size() - 1;
    for (std::size_t i = 1; i < last; ++i)
        x = ops::leaky_relu(ops::conv_transpose2d(x, params.decoder[i].weight, params.decoder[i].bias, 2, 1, 1),
                            kLeakySlope);
    return ops::sigmoid(ops::conv_transpose2d(x, params.decoder[last].weight, params.decoder[last].bias, 2, 1, 1));
}

std::vector<NamedTensor> SystemModel::trainable() const {
    auto out = params.encoder_named();
    for (auto& t : params.decoder_named()) out.push_back(std::move(t));
    for (std::size_t i = 0; i < codebook.pairs.size(); ++i) {
        const auto& p = codebook.pairs[i];
        if (!p.trainable) continue;
        out.push_back({"projection.enc." + std::to_string(i), p.enc});
        out.push_back({"projection.dec." + std::to_string(i), p.dec});
    }
    return out;
}

std::size_t SystemModel::trainable_count() const {
    std::size_t total = 0;
    for (const auto& t : trainable()) total += t.tensor.numel();
    return total;
}

SystemModel SystemModel::clone() const { return {config, pnoma::clone(params), pnoma::clone(codebook)}; }

SystemModel make_system(const SystemConfig& config, RngStream& init_stream) {
    config.validate();
    SystemModel model{config, init_params(config, init_stream), init_single_user(config.m())};
    // Larger systems trained from scratch get an orthogonal codebook by repeated doubling.
    RngStream codebook_stream = init_stream.fork(static_cast<std::uint64_t>(StreamId::Codebook));
    while (model.codebook.n < config.n) model.codebook = double_users(model.codebook, codebook_stream);
    return model;
}

ChannelDraw make_draw(std::vector<std::complex<double>> gains, double snr_db, double p_bar) {
    return {std::move(gains), snr_db, std::sqrt(snr_to_sigma2(snr_db, p_bar))};
}

SystemOutput forward_system(std::span<const Tensor> images, const SystemModel& model, const ChannelDraw& draw,
                            RngStream& noise_stream, const ForwardOptions& options) {
    const auto& cfg = model.config;
    const std::size_t n = cfg.n;
    if (images.size() != n)
        throw ContractViolation("forward_system: " + std::to_string(images.size()) + " images for " +
                                std::to_string(n) + " users");
    if (draw.gains.size() != n) throw ContractViolation("forward_system: gain count does not match users");
    if (model.codebook.n != n || model.codebook.m != cfg.m())
        throw ContractViolation("forward_system: codebook (n=" + std::to_string(model.codebook.n) +
                                ") does not match config (n=" + std::to_string(n) + ")");
    std::vector<bool> active = options.active.value_or(std::vector<bool>(n, true));
    if (active.size() != n) throw ContractViolation("forward_system: active mask length mismatch");

    const std::size_t k = cfg.k();
    const std::size_t hp = cfg.latent_height(), wp = cfg.latent_width();
    SystemOutput out;
    out.reconstructions.resize(n);
    out.decoder_inputs.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        if (!active[i]) {
            out.transmitted.push_back(ComplexVector::zeros(k));
            continue;
        }
        const Conditioning cond{draw.gains[i], draw.snr_db};
        const Tensor latent = encode(images[i], cond, model.params, cfg);
        const Tensor projected = apply_enc(latent, model.codebook.pairs[i]);
        const ComplexVector raw(ops::reshape(projected, {2 * k}));
        out.transmitted.push_back(power_normalize(raw, k, cfg.p_tx()));
    }

    auto receive = [&](std::size_t i, const ComplexVector& y) {
        const Tensor shaped = ops::reshape(y.packed(), {2 * n * cfg.m(), hp, wp});
        const Tensor yi = apply_dec(shaped, model.codebook.pairs[i]);
        out.decoder_inputs[i] = yi;
        out.reconstructions[i] = decode(yi, Conditioning{draw.gains[i], draw.snr_db}, model.params, cfg);
    };

    if (cfg.mode == SystemMode::PerfectSic) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto noise = sample_noise(k, draw.sigma, noise_stream);
            const ComplexVector zi[] = {out.transmitted[i]};
            const std::complex<double> hi[] = {draw.gains[i]};
            out.received.push_back(transmit_with_noise(zi, hi, noise));
            if (active[i]) receive(i, out.received.back());
        }
    } else {
        const auto noise = sample_noise(k, draw.sigma, noise_stream);
        out.received.push_back(transmit_with_noise(out.transmitted, draw.gains, noise));
        for (std::size_t i = 0; i < n; ++i)
            if (active[i]) receive(i, out.received.front());
    }
    return out;
}

}  // namespace pnoma
