// SPDX-License-Identifier: Apache-2.0
//
// JSON experiment configuration shared by the command-line tools.
//
// {
//   "seed": 7,
//   "output_dir": "runs/toy",
//   "channel": "awgn",
//   "stages": 2,
//   "eval_snr_db": [0, 5, 10, 15, 20],
//   "system": {"n": 1, "rho_bar": "1/6", "p_bar": 1.0, "width": 16, "height": 16,
//              "in_channels": 3, "downsample": 2, "filters": 32, "mode": "pnoma"},
//   "train":  {"lr": 1e-3, "batch_size": 8, "betas": [0.9, 0.999], "eps": 1e-8,
//              "snr_range_db": [0, 20], "delta_db": 1e-3, "patience": 10,
//              "max_epochs": 60, "tuple_multiplier": 3, "val_snr_points": 10},
//   "data":   {"source": "synthetic", "path": "", "train_count": 64,
//              "val_count": 64, "test_count": 64}
// }
//
// Every section and key is optional; unknown keys are rejected.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pnoma/data.hpp"
#include "pnoma/model.hpp"
#include "pnoma/training.hpp"

namespace pnoma {

struct DataConfig {
    DataSource source = DataSource::Synthetic;
    std::filesystem::path path;
    // For CIFAR-10, val_count images are held out of the training batches and
    // non-zero train/test counts truncate those splits (0 keeps everything).
    std::size_t train_count = 64;
    std::size_t val_count = 64;
    std::size_t test_count = 64;
};

struct ExperimentConfig {
    SystemConfig system;
    TrainConfig train;
    DataConfig data;
    std::filesystem::path output_dir = "runs/default";
    std::uint64_t seed = 0;
    std::size_t stages = 1;
    std::vector<double> eval_snr_db{0.0, 5.0, 10.0, 15.0, 20.0};

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Parses and validates a config document. Throws ConfigError on unknown
/// keys, wrong types or invalid values.
ExperimentConfig parse_experiment(const std::string& json_text);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Applies the PNOMA_SEED environment override, then `cli_seed` if given.
void apply_seed_overrides(ExperimentConfig& config, std::optional<std::uint64_t> cli_seed);

struct Datasets {
    ImageDataset train;
    ImageDataset val;
    ImageDataset test;
};

/// Synthetic splits use independent forks of the Synthetic stream; CIFAR-10
/// splits come from load_cifar10.
Datasets load_datasets(const ExperimentConfig& config);

}  // namespace pnoma
