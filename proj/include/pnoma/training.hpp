// SPDX-License-Identifier: Apache-2.0
//
// Loss, Adam, the epoch loop with early stopping, progressive fine-tuning and
// checkpoint persistence.
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pnoma/channel.hpp"
#include "pnoma/data.hpp"
#include "pnoma/grad_check.hpp"
#include "pnoma/model.hpp"

namespace pnoma {

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double snr_min_db = 0.0;
    double snr_max_db = 20.0;
    double delta_db = 1e-3;  // early-stop threshold on validation PSNR
    std::size_t patience = 10;
    std::size_t max_epochs = 60;
    std::size_t tuple_multiplier = 3;  // T = multiplier * N
    std::uint64_t seed = 0;
    ChannelKind channel = ChannelKind::Awgn;
    /// Validation evaluates every tuple at this many SNR midpoints spread
    /// over [snr_min_db, snr_max_db]. 0 draws one random SNR per tuple from a
    /// stream replayed every epoch.
    std::size_t val_snr_points = 10;

    void validate() const;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

struct AdamState {
    std::uint64_t step = 0;
    std::map<std::string, AdamMoments> moments;
};

/// One bias-corrected Adam update of every tensor in `params` from its
/// accumulated gradient. Tensors without requires_grad are skipped. Throws
/// NumericError naming the parameter on a non-finite gradient (nothing is
/// updated in that case) and ContractViolation when a moment buffer does not
/// match its parameter's size.
void adam_step(AdamState& state, std::span<const NamedTensor> params, const TrainConfig& config);

/// Sum over users of the per-image MSE (1/(C W H)) ||x - x_hat||^2.
Tensor loss(std::span<const Tensor> x, std::span<const Tensor> x_hat);

struct TrainState {
    SystemModel model;
    AdamState adam;
    std::size_t epoch = 0;  // epochs completed in the current stage
    std::size_t stage = 0;  // doublings applied since the n = 1 base
    std::uint64_t seed = 0;
    double best_val_psnr = -std::numeric_limits<double>::infinity();
    std::size_t since_improvement = 0;

    TrainState clone() const;
};

TrainState make_train_state(const SystemConfig& system, std::uint64_t seed);

struct EpochResult {
    double loss = 0.0;                // sum of batch_losses
    std::vector<double> batch_losses;  // summed tuple losses per optimizer step
};

/// One pass over the tuple rows in an order shuffled by (seed, epoch). Each
/// tuple draws an SNR uniformly from the configured range, channel gains for
/// the configured kind, and noise; gradients accumulate over batch_size
/// tuples before each Adam step. Increments state.epoch.
EpochResult train_epoch(TrainState& state, const ImageDataset& dataset, const TupleIndexSet& tuples,
                        const TrainConfig& config);

/// Mean per-user PSNR over the validation tuples, with replayed channel
/// streams so that repeated calls on the same parameters agree exactly.
double validation_psnr(const SystemModel& model, const ImageDataset& val, const TupleIndexSet& tuples,
                       const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_psnr = 0.0;
    bool improved = false;
};

struct FitResult {
    std::vector<EpochRecord> history;
    double best_val_psnr = 0.0;
    std::size_t best_epoch = 0;  // 0 when the stage-start baseline was retained
    bool stopped_early = false;
};

struct FitOptions {
    /// Include the pre-training validation PSNR in best-checkpoint retention.
    bool retain_baseline = false;
};

/// Trains until validation PSNR fails to improve by delta_db for `patience`
/// consecutive epochs or max_epochs is reached, then restores the
/// best-validation parameters into `state`.
FitResult fit(TrainState& state, const ImageDataset& train, const ImageDataset& val, const TrainConfig& config,
              const FitOptions& options = {});

struct StageResult {
    TrainState state;          // exported model for this stage
    double parent_psnr = 0.0;  // parent's validation PSNR
    double start_psnr = 0.0;   // validation PSNR right after doubling
    FitResult fit;
};

/// Doubles the user count `stages` times starting from `base`, fine-tuning
/// after each doubling.
std::vector<StageResult> progressive_finetune(const TrainState& base, std::size_t stages, const ImageDataset& train,
                                              const ImageDataset& val, const TrainConfig& config);

/// Doubles the codebook of `parent` with the stream keyed by (seed, new n).
TrainState double_state(const TrainState& parent);

inline constexpr int kCheckpointVersion = 1;

/// Writes `dir`/manifest.json and `dir`/params.bin (creating `dir`).
void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
/// Throws FormatError on a missing, corrupt or size-mismatched checkpoint.
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace pnoma
