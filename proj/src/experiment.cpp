// SPDX-License-Identifier: Apache-2.0
#include "pnoma/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "pnoma/errors.hpp"

namespace pnoma {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(section + ": expected an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw ConfigError(section + ": unknown key '" + key + "' (allowed: " + list + ")");
        }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type (" + obj.at(key).dump() + ")");
    }
}

void read_size(const json& obj, const char* key, std::size_t& out, const std::string& section) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        throw ConfigError(section + "." + key + ": expected a non-negative integer, got " + v.dump());
    out = v.get<std::size_t>();
}

void read_pair(const json& obj, const char* key, double& a, double& b, const std::string& section) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError(section + "." + key + ": expected a two-number array, got " + v.dump());
    a = v[0].get<double>();
    b = v[1].get<double>();
}

SystemConfig parse_system(const json& j) {
    const std::string s = "system";
    reject_unknown(j, s, {"n", "rho_bar", "p_bar", "width", "height", "in_channels", "downsample", "filters", "mode"});
    SystemConfig c;
    read_size(j, "n", c.n, s);
    if (j.contains("rho_bar")) {
        const auto& r = j.at("rho_bar");
        if (r.is_string()) c.rho_bar = Rational::parse(r.get<std::string>());
        else if (r.is_number_integer()) c.rho_bar = Rational::parse(std::to_string(r.get<std::int64_t>()));
        else throw ConfigError("system.rho_bar: expected a fraction string such as \"1/6\"");
    }
    read(j, "p_bar", c.p_bar, s);
    read_size(j, "width", c.width, s);
    read_size(j, "height", c.height, s);
    read_size(j, "in_channels", c.in_channels, s);
    read_size(j, "downsample", c.downsample, s);
    read_size(j, "filters", c.filters, s);
    if (j.contains("mode")) {
        std::string mode;
        read(j, "mode", mode, s);
        c.mode = system_mode_from_string(mode);
    }
    return c;
}

TrainConfig parse_train(const json& j) {
    const std::string s = "train";
    reject_unknown(j, s,
                   {"lr", "batch_size", "betas", "eps", "snr_range_db", "delta_db", "patience", "max_epochs",
                    "tuple_multiplier", "val_snr_points"});
    TrainConfig c;
    read(j, "lr", c.lr, s);
    read_size(j, "batch_size", c.batch_size, s);
    read_pair(j, "betas", c.beta1, c.beta2, s);
    read(j, "eps", c.eps, s);
    read_pair(j, "snr_range_db", c.snr_min_db, c.snr_max_db, s);
    read(j, "delta_db", c.delta_db, s);
    read_size(j, "patience", c.patience, s);
    read_size(j, "max_epochs", c.max_epochs, s);
    read_size(j, "tuple_multiplier", c.tuple_multiplier, s);
    read_size(j, "val_snr_points", c.val_snr_points, s);
    return c;
}

DataConfig parse_data(const json& j) {
    const std::string s = "data";
    reject_unknown(j, s, {"source", "path", "train_count", "val_count", "test_count"});
    DataConfig c;
    if (j.contains("source")) {
        std::string src;
        read(j, "source", src, s);
        if (src == "synthetic") c.source = DataSource::Synthetic;
        else if (src == "cifar10") c.source = DataSource::Cifar10;
        else throw ConfigError("data.source: expected synthetic or cifar10, got '" + src + "'");
    }
    std::string path;
    read(j, "path", path, s);
    c.path = path;
    read_size(j, "train_count", c.train_count, s);
    read_size(j, "val_count", c.val_count, s);
    read_size(j, "test_count", c.test_count, s);
    return c;
}

}  // namespace

void ExperimentConfig::validate() const {
    system.validate();
    train.validate();
    if (data.source == DataSource::Synthetic) {
        if (data.train_count == 0 || data.val_count == 0 || data.test_count == 0)
            throw ConfigError("data: synthetic split counts must be positive");
        if (system.in_channels != 3) throw ConfigError("system.in_channels: synthetic images are RGB (3)");
    }
    if (data.source == DataSource::Cifar10) {
        if (data.path.empty()) throw ConfigError("data.path: required for cifar10");
        if (system.width != kCifarSide || system.height != kCifarSide || system.in_channels != 3)
            throw ConfigError("system: cifar10 requires 32x32 RGB images");
    }
    if (data.val_count < system.n) throw ConfigError("data.val_count must be at least system.n");
    if (eval_snr_db.empty()) throw ConfigError("eval_snr_db: at least one SNR required");
}

ExperimentConfig parse_experiment(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, "config", {"seed", "output_dir", "channel", "stages", "eval_snr_db", "system", "train", "data"});
    ExperimentConfig c;
    if (j.contains("system")) c.system = parse_system(j.at("system"));
    if (j.contains("train")) c.train = parse_train(j.at("train"));
    if (j.contains("data")) c.data = parse_data(j.at("data"));
    read(j, "seed", c.seed, "config");
    std::string out = c.output_dir.string();
    read(j, "output_dir", out, "config");
    c.output_dir = out;
    if (j.contains("channel")) {
        std::string ch;
        read(j, "channel", ch, "config");
        try {
            c.train.channel = channel_kind_from_string(ch);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("channel: ") + e.what());
        }
    }
    read_size(j, "stages", c.stages, "config");
    read(j, "eval_snr_db", c.eval_snr_db, "config");
    c.train.seed = c.seed;
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    return parse_experiment({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

void apply_seed_overrides(ExperimentConfig& config, std::optional<std::uint64_t> cli_seed) {
    if (const char* env = std::getenv("PNOMA_SEED"); env && *env) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (*end != '\0') throw ConfigError(std::string("PNOMA_SEED is not an integer: ") + env);
        config.seed = v;
    }
    if (cli_seed) config.seed = *cli_seed;
    config.train.seed = config.seed;
}

Datasets load_datasets(const ExperimentConfig& config) {
    const auto& d = config.data;
    const auto& s = config.system;
    Datasets out;
    if (d.source == DataSource::Synthetic) {
        const RngStream base(config.seed, StreamId::Synthetic);
        RngStream tr = base.fork(0), va = base.fork(1), te = base.fork(2);
        out.train = gen_synthetic(d.train_count, s.width, s.height, tr, Split::Train);
        out.val = gen_synthetic(d.val_count, s.width, s.height, va, Split::Val);
        out.test = gen_synthetic(d.test_count, s.width, s.height, te, Split::Test);
        return out;
    }
    out.train = load_cifar10(d.path, Split::Train, config.seed, d.val_count);
    out.val = load_cifar10(d.path, Split::Val, config.seed, d.val_count);
    out.test = load_cifar10(d.path, Split::Test, config.seed, d.val_count);
    if (d.train_count > 0 && d.train_count < out.train.size()) out.train.images.resize(d.train_count);
    if (d.test_count > 0 && d.test_count < out.test.size()) out.test.images.resize(d.test_count);
    return out;
}

}  // namespace pnoma
