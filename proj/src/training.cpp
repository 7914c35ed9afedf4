// SPDX-License-Identifier: Apache-2.0
#include "pnoma/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "pnoma/errors.hpp"
#include "pnoma/metrics.hpp"
#include "pnoma/ops.hpp"

namespace pnoma {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
    if (patience == 0) throw ConfigError("train.patience must be at least 1");
    if (max_epochs == 0) throw ConfigError("train.max_epochs must be at least 1");
    if (tuple_multiplier == 0) throw ConfigError("train.tuple_multiplier must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("train.betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("train.eps must be positive");
    if (!(snr_min_db <= snr_max_db)) throw ConfigError("train.snr_range_db must be ordered");
    if (!(delta_db >= 0.0)) throw ConfigError("train.delta_db must be non-negative");
}

void adam_step(AdamState& state, std::span<const NamedTensor> params, const TrainConfig& config) {
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        for (double g : p.tensor.grad())
            if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + p.name);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        Tensor param = p.tensor;
        const auto g = param.grad();
        auto& mom = state.moments[p.name];
        if (mom.m.empty()) {
            mom.m.assign(g.size(), 0.0);
            mom.v.assign(g.size(), 0.0);
        }
        if (mom.m.size() != g.size() || mom.v.size() != g.size())
            throw ContractViolation("adam_step: moment buffer size mismatch for " + p.name);
        auto w = param.mutable_data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * g[i];
            mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * g[i] * g[i];
            w[i] -= config.lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + config.eps);
        }
    }
}

Tensor loss(std::span<const Tensor> x, std::span<const Tensor> x_hat) {
    if (x.size() != x_hat.size() || x.empty())
        throw ContractViolation("loss: expected equal, non-empty image lists (" + std::to_string(x.size()) + " vs " +
                                std::to_string(x_hat.size()) + ")");
    Tensor total;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].shape() != x_hat[i].shape())
            throw ContractViolation("loss: user " + std::to_string(i) + " shape " + shape_str(x[i].shape()) +
                                    " vs " + shape_str(x_hat[i].shape()));
        const Tensor term = ops::mse(x[i], x_hat[i]);
        total = total.defined() ? ops::add(total, term) : term;
    }
    return total;
}

TrainState TrainState::clone() const {
    TrainState out = *this;
    out.model = model.clone();
    return out;
}

TrainState make_train_state(const SystemConfig& system, std::uint64_t seed) {
    RngStream init(seed, StreamId::ParamInit);
    TrainState state;
    state.model = make_system(system, init);
    state.seed = seed;
    return state;
}

namespace {

void zero_grads(const std::vector<NamedTensor>& params) {
    for (const auto& p : params) Tensor(p.tensor).zero_grad();
}

std::vector<Tensor> gather(const ImageDataset& dataset, const std::vector<std::size_t>& row) {
    std::vector<Tensor> images;
    images.reserve(row.size());
    for (auto i : row) images.push_back(dataset[i]);
    return images;
}

TupleIndexSet train_tuples_for(const ImageDataset& train, std::size_t n, const TrainConfig& config) {
    RngStream stream = RngStream(config.seed, StreamId::TrainTuples).fork(n);
    return build_train_tuples(train.size(), n, config.tuple_multiplier * train.size(), stream);
}

TupleIndexSet val_tuples_for(const ImageDataset& val, std::size_t n, const TrainConfig& config) {
    RngStream stream = RngStream(config.seed, StreamId::EvalTuples).fork(n);
    return build_eval_tuples(val.size(), n, stream);
}

double tuple_psnr_sum(const SystemModel& model, const std::vector<Tensor>& images, const ChannelDraw& draw,
                      RngStream& noise) {
    const auto out = forward_system(images, model, draw, noise);
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) total += metrics::psnr(images[i], out.reconstructions[i]);
    return total;
}

}  // namespace

EpochResult train_epoch(TrainState& state, const ImageDataset& dataset, const TupleIndexSet& tuples,
                        const TrainConfig& config) {
    config.validate();
    auto& model = state.model;
    const std::size_t n = model.config.n;
    if (tuples.n != n)
        throw ContractViolation("train_epoch: tuples of size " + std::to_string(tuples.n) + " for n = " +
                                std::to_string(n));
    const auto params = model.trainable();
    zero_grads(params);

    const std::uint64_t epoch_key = state.epoch;
    RngStream shuffle = RngStream(config.seed, StreamId::EpochShuffle).fork(n).fork(epoch_key);
    RngStream channel = RngStream(config.seed, StreamId::TrainChannel).fork(n).fork(epoch_key);
    const auto order = shuffle.permutation(tuples.size());

    EpochResult result;
    double batch_loss = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto images = gather(dataset, tuples.rows[order[r]]);
        const double snr = channel.uniform(config.snr_min_db, config.snr_max_db);
        auto draw = make_draw(sample_gains(config.channel, n, channel), snr, model.config.p_bar);
        const auto out = forward_system(images, model, draw, channel);
        const Tensor l = loss(images, out.reconstructions);
        backward(l);
        batch_loss += l.item();
        if (++in_batch == config.batch_size || r + 1 == order.size()) {
            adam_step(state.adam, params, config);
            zero_grads(params);
            result.batch_losses.push_back(batch_loss);
            result.loss += batch_loss;
            batch_loss = 0.0;
            in_batch = 0;
        }
    }
    ++state.epoch;
    return result;
}

double validation_psnr(const SystemModel& model, const ImageDataset& val, const TupleIndexSet& tuples,
                       const TrainConfig& config) {
    NoGradGuard no_grad;
    const std::size_t n = model.config.n;
    if (tuples.n != n || tuples.size() == 0) throw ContractViolation("validation_psnr: tuples do not match n");
    const RngStream base = RngStream(config.seed, StreamId::ValChannel).fork(n);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < tuples.size(); ++t) {
        const auto images = gather(val, tuples.rows[t]);
        RngStream tuple_stream = base.fork(t);
        const auto gains = sample_gains(config.channel, n, tuple_stream);
        if (config.val_snr_points == 0) {
            const double snr = tuple_stream.uniform(config.snr_min_db, config.snr_max_db);
            total += tuple_psnr_sum(model, images, make_draw(gains, snr, model.config.p_bar), tuple_stream);
            count += n;
            continue;
        }
        const double span = config.snr_max_db - config.snr_min_db;
        for (std::size_t s = 0; s < config.val_snr_points; ++s) {
            const double snr =
                config.snr_min_db + span * (static_cast<double>(s) + 0.5) / static_cast<double>(config.val_snr_points);
            RngStream noise = tuple_stream.fork(s + 1);
            total += tuple_psnr_sum(model, images, make_draw(gains, snr, model.config.p_bar), noise);
            count += n;
        }
    }
    return total / static_cast<double>(count);
}

FitResult fit(TrainState& state, const ImageDataset& train, const ImageDataset& val, const TrainConfig& config,
              const FitOptions& options) {
    config.validate();
    const std::size_t n = state.model.config.n;
    const auto train_tuples = train_tuples_for(train, n, config);
    const auto val_tuples = val_tuples_for(val, n, config);

    FitResult result;
    double best = -std::numeric_limits<double>::infinity();
    TrainState snapshot;
    bool have_snapshot = false;
    if (options.retain_baseline) {
        best = validation_psnr(state.model, val, val_tuples, config);
        snapshot = state.clone();
        have_snapshot = true;
    }
    double best_trained = -std::numeric_limits<double>::infinity();
    std::size_t since = 0;
    for (std::size_t e = 1; e <= config.max_epochs; ++e) {
        const auto epoch = train_epoch(state, train, train_tuples, config);
        const double v = validation_psnr(state.model, val, val_tuples, config);
        const bool improved = result.history.empty() || v - best_trained >= config.delta_db;
        since = improved ? 0 : since + 1;
        best_trained = std::max(best_trained, v);
        if (v > best) {
            best = v;
            result.best_epoch = state.epoch;
            snapshot = state.clone();
            have_snapshot = true;
        }
        result.history.push_back({state.epoch, epoch.loss, v, improved});
        if (since >= config.patience) {
            result.stopped_early = true;
            break;
        }
    }
    if (have_snapshot) state = snapshot;
    state.best_val_psnr = best;
    state.since_improvement = since;
    result.best_val_psnr = best;
    return result;
}

TrainState double_state(const TrainState& parent) {
    TrainState child;
    child.model = parent.model.clone();
    child.model.config.n = parent.model.config.n * 2;
    RngStream stream = RngStream(parent.seed, StreamId::Codebook).fork(child.model.config.n);
    child.model.codebook = double_users(parent.model.codebook, stream);
    child.stage = parent.stage + 1;
    child.seed = parent.seed;
    return child;
}

std::vector<StageResult> progressive_finetune(const TrainState& base, std::size_t stages, const ImageDataset& train,
                                              const ImageDataset& val, const TrainConfig& config) {
    config.validate();
    std::vector<StageResult> results;
    TrainState current = base.clone();
    double parent_psnr =
        validation_psnr(current.model, val, val_tuples_for(val, current.model.config.n, config), config);
    for (std::size_t s = 0; s < stages; ++s) {
        TrainState child = double_state(current);
        StageResult stage;
        stage.parent_psnr = parent_psnr;
        stage.start_psnr =
            validation_psnr(child.model, val, val_tuples_for(val, child.model.config.n, config), config);
        stage.fit = fit(child, train, val, config, FitOptions{true});
        stage.state = child.clone();
        parent_psnr = stage.fit.best_val_psnr;
        current = std::move(child);
        results.push_back(std::move(stage));
    }
    return results;
}

// Checkpoints

namespace {

struct BlobEntry {
    std::string name;
    Tensor tensor;
    bool trainable;
};

std::vector<BlobEntry> checkpoint_entries(const TrainState& state) {
    std::vector<BlobEntry> out;
    for (auto& t : state.model.params.encoder_named()) out.push_back({t.name, t.tensor, true});
    for (auto& t : state.model.params.decoder_named()) out.push_back({t.name, t.tensor, true});
    const auto& pairs = state.model.codebook.pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out.push_back({"codebook.enc." + std::to_string(i), pairs[i].enc, pairs[i].trainable});
        out.push_back({"codebook.dec." + std::to_string(i), pairs[i].dec, pairs[i].trainable});
    }
    for (const auto& [name, mom] : state.adam.moments) {
        out.push_back({"adam.m." + name, Tensor::from({mom.m.size()}, mom.m), false});
        out.push_back({"adam.v." + name, Tensor::from({mom.v.size()}, mom.v), false});
    }
    return out;
}

json system_to_json(const SystemConfig& c) {
    return json{{"n", c.n},
                {"rho_bar", c.rho_bar.str()},
                {"p_bar", c.p_bar},
                {"width", c.width},
                {"height", c.height},
                {"in_channels", c.in_channels},
                {"downsample", c.downsample},
                {"filters", c.filters},
                {"mode", to_string(c.mode)}};
}

SystemConfig system_from_json(const json& j) {
    SystemConfig c;
    c.n = j.at("n").get<std::size_t>();
    c.rho_bar = Rational::parse(j.at("rho_bar").get<std::string>());
    c.p_bar = j.at("p_bar").get<double>();
    c.width = j.at("width").get<std::size_t>();
    c.height = j.at("height").get<std::size_t>();
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.downsample = j.at("downsample").get<std::size_t>();
    c.filters = j.at("filters").get<std::size_t>();
    c.mode = system_mode_from_string(j.at("mode").get<std::string>());
    c.validate();
    return c;
}

void put_le(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double get_le(const std::string& in, std::size_t offset) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(b)]))
                << (8 * b);
    return std::bit_cast<double>(bits);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("checkpoint: cannot write " + p.string());
}

void copy_into(Tensor& dst, const Shape& shape, const std::vector<double>& values, const std::string& name) {
    if (dst.shape() != shape)
        throw FormatError("checkpoint: tensor " + name + " has shape " + shape_str(shape) + ", expected " +
                          shape_str(dst.shape()));
    auto d = dst.mutable_data();
    std::copy(values.begin(), values.end(), d.begin());
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& cfg = state.model.config;
    json manifest;
    manifest["format"] = "pnoma-checkpoint";
    manifest["version"] = kCheckpointVersion;
    manifest["rng_algorithm"] = std::string(kRngAlgorithm);
    manifest["seed"] = state.seed;
    manifest["epoch"] = state.epoch;
    manifest["stage"] = state.stage;
    manifest["n"] = cfg.n;
    manifest["m"] = cfg.m();
    manifest["config"] = system_to_json(cfg);
    manifest["best_val_psnr"] = std::isfinite(state.best_val_psnr) ? json(state.best_val_psnr) : json(nullptr);
    manifest["since_improvement"] = state.since_improvement;
    manifest["adam_step"] = state.adam.step;

    std::string blob;
    json tensors = json::array();
    for (const auto& e : checkpoint_entries(state)) {
        tensors.push_back({{"name", e.name},
                           {"shape", e.tensor.shape()},
                           {"offset", blob.size()},
                           {"count", e.tensor.numel()},
                           {"trainable", e.trainable}});
        for (double v : e.tensor.data()) put_le(blob, v);
    }
    manifest["tensors"] = std::move(tensors);
    manifest["params_bytes"] = blob.size();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_file(dir / "params.bin", blob);
}

TrainState load_checkpoint(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw FormatError("checkpoint: corrupt manifest in " + dir.string() + ": " + e.what());
    }
    const std::string blob = read_file(dir / "params.bin");
    try {
        if (manifest.at("format") != "pnoma-checkpoint" || manifest.at("version") != kCheckpointVersion)
            throw FormatError("checkpoint: unsupported format/version in " + dir.string());
        if (manifest.at("rng_algorithm") != std::string(kRngAlgorithm))
            throw FormatError("checkpoint: written with RNG '" + manifest.at("rng_algorithm").get<std::string>() +
                              "'");
        if (manifest.at("params_bytes").get<std::size_t>() != blob.size())
            throw FormatError("checkpoint: params.bin has " + std::to_string(blob.size()) + " bytes, manifest says " +
                              std::to_string(manifest.at("params_bytes").get<std::size_t>()));

        TrainState state;
        SystemConfig cfg;
        try {
            cfg = system_from_json(manifest.at("config"));
        } catch (const ConfigError& e) {
            throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
        }
        if (manifest.at("n").get<std::size_t>() != cfg.n || manifest.at("m").get<std::size_t>() != cfg.m())
            throw FormatError("checkpoint: n/m fields disagree with config");
        state.seed = manifest.at("seed").get<std::uint64_t>();
        state.epoch = manifest.at("epoch").get<std::size_t>();
        state.stage = manifest.at("stage").get<std::size_t>();
        state.since_improvement = manifest.at("since_improvement").get<std::size_t>();
        const auto& best = manifest.at("best_val_psnr");
        state.best_val_psnr = best.is_null() ? -std::numeric_limits<double>::infinity() : best.get<double>();
        state.adam.step = manifest.at("adam_step").get<std::uint64_t>();

        RngStream shapes_only(0, StreamId::ParamInit);
        state.model.config = cfg;
        state.model.params = init_params(cfg, shapes_only);
        state.model.codebook.n = cfg.n;
        state.model.codebook.m = cfg.m();
        state.model.codebook.pairs.resize(cfg.n);

        std::map<std::string, Tensor> params;
        for (auto& t : state.model.params.encoder_named()) params.emplace(t.name, t.tensor);
        for (auto& t : state.model.params.decoder_named()) params.emplace(t.name, t.tensor);
        std::size_t params_seen = 0, pairs_seen = 0;

        for (const auto& t : manifest.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<Shape>();
            const auto offset = t.at("offset").get<std::size_t>();
            const auto count = t.at("count").get<std::size_t>();
            const bool trainable = t.at("trainable").get<bool>();
            if (shape_numel(shape) != count || offset % 8 != 0 || offset + 8 * count > blob.size())
                throw FormatError("checkpoint: tensor " + name + " has inconsistent size/offset");
            std::vector<double> values(count);
            for (std::size_t i = 0; i < count; ++i) values[i] = get_le(blob, offset + 8 * i);

            if (auto it = params.find(name); it != params.end()) {
                copy_into(it->second, shape, values, name);
                ++params_seen;
            } else if (name.rfind("codebook.", 0) == 0) {
                const bool is_enc = name.rfind("codebook.enc.", 0) == 0;
                const auto idx = std::stoul(name.substr(13));
                if (idx >= cfg.n) throw FormatError("checkpoint: projection index out of range in " + name);
                Tensor tensor = trainable ? Tensor::parameter(shape, std::move(values))
                                          : Tensor::from(shape, std::move(values));
                auto& pair = state.model.codebook.pairs[idx];
                (is_enc ? pair.enc : pair.dec) = tensor;
                pair.trainable = trainable;
                ++pairs_seen;
            } else if (name.rfind("adam.m.", 0) == 0) {
                state.adam.moments[name.substr(7)].m = std::move(values);
            } else if (name.rfind("adam.v.", 0) == 0) {
                state.adam.moments[name.substr(7)].v = std::move(values);
            } else {
                throw FormatError("checkpoint: unknown tensor " + name);
            }
        }
        if (params_seen != params.size() || pairs_seen != 2 * cfg.n)
            throw FormatError("checkpoint: missing tensors in " + dir.string());
        try {
            state.model.codebook.validate();
        } catch (const ContractViolation& e) {
            throw FormatError(std::string("checkpoint: invalid codebook: ") + e.what());
        }
        return state;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
    }
}

}  // namespace pnoma
