// SPDX-License-Identifier: Apache-2.0
#include "pnoma/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <mutex>
#include <thread>

#include "pnoma/errors.hpp"
#include "pnoma/projection.hpp"

namespace pnoma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::vector<double>> nan_grid(std::size_t rows, std::size_t cols) {
    return std::vector<std::vector<double>>(rows, std::vector<double>(cols, kNaN));
}

void mean_std(const std::vector<std::vector<double>>& grid, double& mean, double& stddev, std::size_t& count) {
    double sum = 0.0;
    count = 0;
    for (const auto& row : grid)
        for (double v : row)
            if (std::isfinite(v)) {
                sum += v;
                ++count;
            }
    mean = count ? sum / static_cast<double>(count) : kNaN;
    double sq = 0.0;
    for (const auto& row : grid)
        for (double v : row)
            if (std::isfinite(v)) sq += (v - mean) * (v - mean);
    stddev = count ? std::sqrt(sq / static_cast<double>(count)) : kNaN;
}

// Runs fn(t) for t in [0, count) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t t = 0; t < count; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            try {
                for (std::size_t t = next++; t < count; t = next++) fn(t);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

ImageScores evaluation_pass(const SystemModel& model, const ImageDataset& dataset, double snr_db,
                            const EvalOptions& options, const std::vector<bool>& active) {
    const std::size_t n = model.config.n;
    if (!active.empty() && active.size() != n) throw ContractViolation("evaluation_pass: active mask length mismatch");
    RngStream tuple_stream = RngStream(options.seed, StreamId::EvalTuples).fork(n);
    const auto tuples = build_eval_tuples(dataset.size(), n, tuple_stream);
    const RngStream channel_base = RngStream(options.seed, StreamId::EvalChannel).fork(n);

    ImageScores s{nan_grid(tuples.size(), n), nan_grid(tuples.size(), n), nan_grid(tuples.size(), n),
                  nan_grid(tuples.size(), n)};
    parallel_for(tuples.size(), options.threads, [&](std::size_t t) {
        NoGradGuard no_grad;
        std::vector<Tensor> images;
        for (auto i : tuples.rows[t]) images.push_back(dataset[i]);
        RngStream stream = channel_base.fork(t);
        auto draw = make_draw(sample_gains(options.channel, n, stream), snr_db, model.config.p_bar);
        ForwardOptions fo;
        if (!active.empty()) fo.active = active;
        const auto out = forward_system(images, model, draw, stream, fo);
        for (std::size_t u = 0; u < n; ++u) {
            if (!active.empty() && !active[u]) continue;
            const auto& x = images[u];
            const auto& y = out.reconstructions[u];
            s.psnr[t][u] = metrics::psnr(x, y);
            s.ssim[t][u] = metrics::ssim(x, y);
            s.ms_ssim[t][u] = metrics::ms_ssim_auto(x, y);
            s.mse[t][u] = metrics::mse(x, y);
        }
    });
    return s;
}

MetricsRow aggregate(const ImageScores& scores, double snr_db, std::size_t n) {
    MetricsRow row;
    row.snr_db = snr_db;
    row.n = n;
    mean_std(scores.psnr, row.psnr, row.psnr_std, row.count);
    std::size_t unused = 0;
    mean_std(scores.ssim, row.ssim, row.ssim_std, unused);
    mean_std(scores.ms_ssim, row.ms_ssim, row.ms_ssim_std, unused);
    mean_std(scores.mse, row.mse, row.mse_std, unused);
    return row;
}

std::string config_hash(const SystemConfig& c) {
    std::ostringstream s;
    s << "n=" << c.n << ";rho=" << c.rho_bar.str() << ";p=" << format_number(c.p_bar) << ";w=" << c.width
      << ";h=" << c.height << ";c=" << c.in_channels << ";ds=" << c.downsample << ";f=" << c.filters
      << ";mode=" << to_string(c.mode);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s.str()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<MetricsRow> evaluate(const SystemModel& model, const ImageDataset& dataset,
                                 std::span<const double> snr_list, const EvalOptions& options) {
    std::vector<MetricsRow> rows;
    const auto hash = config_hash(model.config);
    for (double snr : snr_list) {
        rows.push_back(aggregate(evaluation_pass(model, dataset, snr, options), snr, model.config.n));
        rows.back().config_hash = hash;
    }
    return rows;
}

double max_pairwise_gap(std::span<const double> values) {
    if (values.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *hi - *lo;
}

FairnessReport fairness_report(const SystemModel& model, const ImageDataset& dataset, double snr_db,
                               const EvalOptions& options) {
    const std::size_t n = model.config.n;
    if (n < 2) throw ContractViolation("fairness_report: needs n >= 2");
    const auto scores = evaluation_pass(model, dataset, snr_db, options);
    FairnessReport report;
    report.snr_db = snr_db;
    for (std::size_t u = 0; u < n; ++u) {
        double sum = 0.0;
        for (const auto& row : scores.psnr) sum += row[u];
        report.user_psnr.push_back(sum / static_cast<double>(scores.psnr.size()));
    }
    report.max_gap = max_pairwise_gap(report.user_psnr);
    return report;
}

MetricsRow subset_eval(const SystemModel& model, std::span<const std::size_t> active, const ImageDataset& dataset,
                       double snr_db, const EvalOptions& options) {
    const std::size_t n = model.config.n;
    if (active.empty()) throw ContractViolation("subset_eval: active user set is empty");
    std::vector<bool> mask(n, false);
    for (auto u : active) {
        if (u >= n)
            throw ContractViolation("subset_eval: user " + std::to_string(u) + " out of range for n = " +
                                    std::to_string(n));
        mask[u] = true;
    }
    auto row = aggregate(evaluation_pass(model, dataset, snr_db, options, mask), snr_db, n);
    row.config_hash = config_hash(model.config);
    return row;
}

double angle_degrees(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ContractViolation("angle_degrees: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return kNaN;
    const double c = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

AngleMatrix orthogonality_angles(const SystemModel& model, std::span<const Tensor> probes, double snr_db) {
    const auto& cfg = model.config;
    const std::size_t n = cfg.n, m = cfg.m(), nm = n * m;
    if (probes.size() != 1 && probes.size() != n)
        throw ContractViolation("orthogonality_angles: expected 1 or n probe images, got " +
                                std::to_string(probes.size()));
    NoGradGuard no_grad;
    const std::size_t plane = cfg.latent_height() * cfg.latent_width();
    // filters[i*m + j] = flattened (re, im) of a_j(p) * P_i[j, c] over (c, p)
    std::vector<std::vector<double>> filters(nm, std::vector<double>(2 * nm * plane));
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& probe = probes.size() == 1 ? probes[0] : probes[i];
        const Tensor latent = encode(probe, Conditioning{{1.0, 0.0}, snr_db}, model.params, cfg);
        const auto p = ComplexMatrix::from_realified(model.codebook.pairs[i].enc);
        const auto lv = latent.data();
        for (std::size_t j = 0; j < m; ++j) {
            auto& f = filters[i * m + j];
            for (std::size_t c = 0; c < nm; ++c)
                for (std::size_t q = 0; q < plane; ++q) {
                    const cplx a{lv[j * plane + q], lv[(m + j) * plane + q]};
                    const cplx v = a * p(j, c);
                    f[2 * (c * plane + q)] = v.real();
                    f[2 * (c * plane + q) + 1] = v.imag();
                }
        }
    }
    AngleMatrix out{n, m, std::vector<double>(nm * nm, 0.0), std::vector<bool>(nm, false)};
    for (std::size_t r = 0; r < nm; ++r)
        out.degenerate[r] = std::all_of(filters[r].begin(), filters[r].end(), [](double v) { return v == 0.0; });
    for (std::size_t r = 0; r < nm; ++r)
        for (std::size_t c = r; c < nm; ++c) {
            const double a = (r == c && !out.degenerate[r]) ? 0.0 : angle_degrees(filters[r], filters[c]);
            out.degrees[r * nm + c] = a;
            out.degrees[c * nm + r] = a;
        }
    return out;
}

std::vector<HistogramBin> angle_histogram(const AngleMatrix& angles, double bin_width_deg) {
    if (!(bin_width_deg > 0.0)) throw ContractViolation("angle_histogram: bin width must be positive");
    const auto bins = static_cast<std::size_t>(std::ceil(180.0 / bin_width_deg));
    std::vector<HistogramBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b)
        out[b] = {bin_width_deg * static_cast<double>(b), std::min(180.0, bin_width_deg * static_cast<double>(b + 1)),
                  0};
    const std::size_t s = angles.size();
    for (std::size_t r = 0; r < s; ++r)
        for (std::size_t c = r + 1; c < s; ++c) {
            const double a = angles.at(r, c);
            if (!std::isfinite(a)) continue;
            const auto b = std::min(bins - 1, static_cast<std::size_t>(a / bin_width_deg));
            ++out[b].count;
        }
    return out;
}

std::string to_string(CapacityConvention convention) {
    return convention == CapacityConvention::FixedPerUserPower ? "fixed-per-user-power" : "fixed-total-power";
}

CapacityConvention capacity_convention_from_string(const std::string& name) {
    if (name == "fixed-per-user-power") return CapacityConvention::FixedPerUserPower;
    if (name == "fixed-total-power") return CapacityConvention::FixedTotalPower;
    throw ContractViolation("unknown capacity convention '" + name +
                            "' (expected fixed-per-user-power or fixed-total-power)");
}

std::vector<CapacityRow> capacity_curves(std::size_t n_max, double p, double sigma2, CapacityConvention convention) {
    if (n_max == 0) throw ContractViolation("capacity_curves: n_max must be at least 1");
    if (!(p > 0.0) || !(sigma2 > 0.0)) throw ContractViolation("capacity_curves: p and sigma^2 must be positive");
    std::vector<CapacityRow> rows;
    const double tdma = std::log2(1.0 + p / sigma2);
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double mac = convention == CapacityConvention::FixedPerUserPower
                               ? std::log2(1.0 + static_cast<double>(n) * p / sigma2)
                               : tdma;
        rows.push_back({n, mac, tdma});
    }
    return rows;
}

ParamReport param_report(const SystemModel& model) {
    ParamReport r;
    for (const auto& t : model.params.encoder_named()) r.encoder += t.tensor.numel();
    for (const auto& t : model.params.decoder_named()) r.decoder += t.tensor.numel();
    for (const auto& p : model.codebook.pairs)
        if (p.trainable) r.projections += p.enc.numel() + p.dec.numel();
    r.total = model.trainable_count();
    return r;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << kMetricsCsvHeader << '\n';
    for (const auto& r : rows)
        out << format_number(r.snr_db) << ',' << format_number(r.psnr) << ',' << format_number(r.psnr_std) << ','
            << format_number(r.ssim) << ',' << format_number(r.ssim_std) << ',' << format_number(r.ms_ssim) << ','
            << format_number(r.ms_ssim_std) << '\n';
}

void write_fairness_csv(std::ostream& out, const FairnessReport& report) {
    out << "user,test/psnr\n";
    for (std::size_t u = 0; u < report.user_psnr.size(); ++u)
        out << u << ',' << format_number(report.user_psnr[u]) << '\n';
    out << "max_gap," << format_number(report.max_gap) << '\n';
}

void write_angle_matrix_csv(std::ostream& out, const AngleMatrix& angles) {
    const std::size_t s = angles.size();
    out << "filter";
    for (std::size_t c = 0; c < s; ++c) out << ",u" << c / angles.m << "f" << c % angles.m;
    out << '\n';
    for (std::size_t r = 0; r < s; ++r) {
        out << 'u' << r / angles.m << 'f' << r % angles.m;
        for (std::size_t c = 0; c < s; ++c) out << ',' << format_number(angles.at(r, c));
        out << '\n';
    }
}

void write_histogram_csv(std::ostream& out, std::span<const HistogramBin> bins) {
    out << kHistogramCsvHeader << '\n';
    for (const auto& b : bins) out << format_number(b.low) << ',' << format_number(b.high) << ',' << b.count << '\n';
}

void write_capacity_csv(std::ostream& out, std::span<const CapacityRow> rows) {
    out << "n,c_mac,c_tdma\n";
    for (const auto& r : rows) out << r.n << ',' << format_number(r.c_mac) << ',' << format_number(r.c_tdma) << '\n';
}

void write_param_csv(std::ostream& out, const ParamReport& r) {
    out << "component,count\n"
        << "encoder," << r.encoder << '\n'
        << "decoder," << r.decoder << '\n'
        << "projection," << r.projections << '\n'
        << "total," << r.total << '\n';
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_svg_plot(std::ostream& out, const std::string& title, const std::string& x_label,
                    const std::string& y_label, std::span<const PlotSeries> series) {
    constexpr double width = 640, height = 420, left = 70, right = 160, top = 40, bottom = 60;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
        << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n";
    out << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << top + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    out << "<text x=\"" << left << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << format_number(x0) << "</text>\n";
    out << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << format_number(x1) << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\" font-size=\"11\">"
        << format_number(y0) << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << format_number(y1) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % std::size(colors)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            out << format_number(px(s.x[i])) << ',' << format_number(py(s.y[i])) << ' ';
        }
        out << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(k + 1);
        out << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32 << "\" y2=\""
            << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\" font-size=\"12\">" << xml_escape(s.name)
            << "</text>\n";
    }
    out << "</svg>\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw FormatError("cannot write " + path.string());
}

}  // namespace pnoma
