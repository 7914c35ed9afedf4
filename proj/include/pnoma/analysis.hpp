// SPDX-License-Identifier: Apache-2.0
//
// Evaluation passes and analysis reports over trained systems.
#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pnoma/channel.hpp"
#include "pnoma/data.hpp"
#include "pnoma/metrics.hpp"
#include "pnoma/model.hpp"

namespace pnoma {

struct EvalOptions {
    ChannelKind channel = ChannelKind::Awgn;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct MetricsRow {
    double snr_db = 0.0;
    std::size_t n = 1;
    std::size_t count = 0;  // images aggregated
    double psnr = 0.0, psnr_std = 0.0;
    double ssim = 0.0, ssim_std = 0.0;
    double ms_ssim = 0.0, ms_ssim_std = 0.0;
    double mse = 0.0, mse_std = 0.0;
    std::string config_hash;
};

/// Per-image metrics of one evaluation pass, indexed [tuple][user]. Inactive
/// users hold NaN.
struct ImageScores {
    std::vector<std::vector<double>> psnr, ssim, ms_ssim, mse;
};

/// One pass over the evaluation tuples of `dataset` at `snr_db`. Tuples,
/// channel gains and unit-variance noise are keyed by (seed, tuple), so every
/// SNR point sees the same draws scaled by its sigma and results do not
/// depend on the thread count.
ImageScores evaluation_pass(const SystemModel& model, const ImageDataset& dataset, double snr_db,
                            const EvalOptions& options, const std::vector<bool>& active = {});

/// Mean and population standard deviation over every finite entry.
MetricsRow aggregate(const ImageScores& scores, double snr_db, std::size_t n);

/// Stable FNV-1a digest of the system configuration.
std::string config_hash(const SystemConfig& config);

/// One row per SNR, metrics aggregated over all users of all tuples.
std::vector<MetricsRow> evaluate(const SystemModel& model, const ImageDataset& dataset,
                                 std::span<const double> snr_list, const EvalOptions& options);

struct FairnessReport {
    double snr_db = 0.0;
    std::vector<double> user_psnr;
    double max_gap = 0.0;
};

double max_pairwise_gap(std::span<const double> values);

FairnessReport fairness_report(const SystemModel& model, const ImageDataset& dataset, double snr_db,
                               const EvalOptions& options);

/// Evaluates with only `active` (0-based user indices) transmitting.
MetricsRow subset_eval(const SystemModel& model, std::span<const std::size_t> active, const ImageDataset& dataset,
                       double snr_db, const EvalOptions& options);

struct AngleMatrix {
    std::size_t n = 1;
    std::size_t m = 1;
    std::vector<double> degrees;  // (n m) x (n m), row-major; NaN marks a zero-norm filter
    std::vector<bool> degenerate;  // per (user, filter)

    std::size_t size() const { return n * m; }
    double at(std::size_t row, std::size_t col) const { return degrees[row * size() + col]; }
};

/// Angle in degrees between two real vectors; NaN when either has zero norm.
double angle_degrees(std::span<const double> a, std::span<const double> b);

/// Filter j of user i is the latent map of filter j spread by row j of P_i,
/// i.e. the (nm, H', W') complex contribution of that filter to the
/// transmitted signal before power normalization, flattened to real values.
/// `probes` holds one image per user or a single image shared by all users.
AngleMatrix orthogonality_angles(const SystemModel& model, std::span<const Tensor> probes, double snr_db);

struct HistogramBin {
    double low = 0.0;
    double high = 0.0;
    std::size_t count = 0;
};

/// Histogram of the strictly upper-triangular finite angles.
std::vector<HistogramBin> angle_histogram(const AngleMatrix& angles, double bin_width_deg = 5.0);

enum class CapacityConvention { FixedPerUserPower, FixedTotalPower };

std::string to_string(CapacityConvention convention);
/// Accepts "fixed-per-user-power" and "fixed-total-power"; throws ContractViolation otherwise.
CapacityConvention capacity_convention_from_string(const std::string& name);

struct CapacityRow {
    std::size_t n = 1;
    double c_mac = 0.0;
    double c_tdma = 0.0;
};

std::vector<CapacityRow> capacity_curves(std::size_t n_max, double p, double sigma2, CapacityConvention convention);

struct ParamReport {
    std::size_t encoder = 0;
    std::size_t decoder = 0;
    std::size_t projections = 0;
    std::size_t total = 0;
};

ParamReport param_report(const SystemModel& model);

// CSV and SVG writers.

inline constexpr const char* kMetricsCsvHeader =
    "model/snr,test/psnr,test/psnr_std,test/ssim,test/ssim_std,test/msssim,test/msssim_std";
inline constexpr const char* kHistogramCsvHeader = "bin_low_deg,bin_high_deg,count";

/// Shortest round-trip decimal form.
std::string format_number(double v);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
void write_fairness_csv(std::ostream& out, const FairnessReport& report);
void write_angle_matrix_csv(std::ostream& out, const AngleMatrix& angles);
void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins);
void write_capacity_csv(std::ostream& out, std::span<const CapacityRow> rows);
void write_param_csv(std::ostream& out, const ParamReport& report);

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal line chart: one polyline per series, axis labels and a legend.
void write_svg_plot(std::ostream& out, const std::string& title, const std::string& x_label,
                    const std::string& y_label, std::span<const PlotSeries> series);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pnoma
