// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "pnoma/analysis.hpp"
#include "pnoma/errors.hpp"
#include "pnoma/experiment.hpp"
#include "pnoma/training.hpp"

namespace pnoma::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string channel;
    std::vector<double> snr;
    std::size_t threads = 1;
};

ExperimentConfig load_config(const Common& c) {
    auto cfg = load_experiment(c.config);
    apply_seed_overrides(cfg, c.seed);
    if (!c.channel.empty()) cfg.train.channel = channel_kind_from_string(c.channel);
    if (!c.out.empty()) cfg.output_dir = c.out;
    return cfg;
}

void require_compatible(const SystemConfig& model, const ExperimentConfig& cfg) {
    const auto& s = cfg.system;
    if (model.width != s.width || model.height != s.height || model.in_channels != s.in_channels)
        throw ConfigError("checkpoint images are " + std::to_string(model.in_channels) + "x" +
                          std::to_string(model.height) + "x" + std::to_string(model.width) + ", config data is " +
                          std::to_string(s.in_channels) + "x" + std::to_string(s.height) + "x" +
                          std::to_string(s.width));
}

std::string csv_history(const FitResult& fit) {
    std::ostringstream s;
    s << "epoch,train_loss,val_psnr,improved\n";
    for (const auto& r : fit.history)
        s << r.epoch << ',' << format_number(r.train_loss) << ',' << format_number(r.val_psnr) << ','
          << (r.improved ? 1 : 0) << '\n';
    return s.str();
}

std::string svg_history(const FitResult& fit, const std::string& title) {
    PlotSeries val{"validation PSNR", {}, {}};
    for (const auto& r : fit.history) {
        val.x.push_back(static_cast<double>(r.epoch));
        val.y.push_back(r.val_psnr);
    }
    std::ostringstream s;
    const PlotSeries series[] = {val};
    write_svg_plot(s, title, "epoch", "PSNR (dB)", series);
    return s.str();
}

fs::path with_svg(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".svg");
    return p;
}

fs::path out_file(const Common& c, const ExperimentConfig* cfg, const char* default_name) {
    if (!c.out.empty()) return c.out;
    return (cfg ? cfg->output_dir : fs::path(".")) / default_name;
}

int cmd_train(const Common& c) {
    auto cfg = load_config(c);
    const auto data = load_datasets(cfg);
    TrainState state;
    if (!c.checkpoint.empty()) {
        state = load_checkpoint(c.checkpoint);
        require_compatible(state.model.config, cfg);
        state.seed = cfg.seed;
        state.epoch = 0;
    } else {
        state = make_train_state(cfg.system, cfg.seed);
    }
    const auto fit_result = fit(state, data.train, data.val, cfg.train);
    const fs::path dir = cfg.output_dir;
    save_checkpoint(state, dir / "checkpoint");
    write_text_file(dir / "history.csv", csv_history(fit_result));
    write_text_file(dir / "history.svg", svg_history(fit_result, "Training (n = " +
                                                                    std::to_string(state.model.config.n) + ")"));
    std::cout << "trained n=" << state.model.config.n << " for " << fit_result.history.size()
              << " epochs, best validation PSNR " << format_number(fit_result.best_val_psnr) << " dB -> "
              << (dir / "checkpoint").string() << '\n';
    return kOk;
}

int cmd_double(const Common& c, std::optional<std::size_t> stages_flag) {
    auto cfg = load_config(c);
    if (c.checkpoint.empty()) throw ConfigError("double: --checkpoint is required");
    TrainState parent = load_checkpoint(c.checkpoint);
    require_compatible(parent.model.config, cfg);
    parent.seed = cfg.seed;
    const std::size_t stages = stages_flag.value_or(cfg.stages);
    if (stages == 0) throw ConfigError("double: --stages must be at least 1");
    const auto data = load_datasets(cfg);
    const auto results = progressive_finetune(parent, stages, data.train, data.val, cfg.train);
    const fs::path dir = cfg.output_dir;
    std::ostringstream init;
    init << "stage,n,parent_psnr,start_psnr,final_psnr\n";
    for (std::size_t s = 0; s < results.size(); ++s) {
        const auto& r = results[s];
        const std::size_t n = r.state.model.config.n;
        const std::string tag = "n" + std::to_string(n);
        save_checkpoint(r.state, dir / tag);
        write_text_file(dir / ("history_" + tag + ".csv"), csv_history(r.fit));
        init << s + 1 << ',' << n << ',' << format_number(r.parent_psnr) << ',' << format_number(r.start_psnr) << ','
             << format_number(r.fit.best_val_psnr) << '\n';
        std::cout << "stage " << s + 1 << ": n=" << n << " start " << format_number(r.start_psnr) << " dB, final "
                  << format_number(r.fit.best_val_psnr) << " dB -> " << (dir / tag).string() << '\n';
    }
    write_text_file(dir / "stage_init.csv", init.str());
    return kOk;
}

struct Loaded {
    ExperimentConfig cfg;
    TrainState state;
    Datasets data;
};

Loaded load_for_eval(const Common& c) {
    if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    Loaded l{load_config(c), load_checkpoint(c.checkpoint), {}};
    require_compatible(l.state.model.config, l.cfg);
    l.data = load_datasets(l.cfg);
    return l;
}

EvalOptions eval_options(const Common& c, const ExperimentConfig& cfg) {
    return {cfg.train.channel, cfg.seed, std::max<std::size_t>(1, c.threads)};
}

double single_snr(const Common& c) {
    if (c.snr.size() > 1) throw ConfigError("expected a single --snr value");
    return c.snr.empty() ? 10.0 : c.snr.front();
}

int cmd_eval(const Common& c) {
    auto l = load_for_eval(c);
    const auto snrs = c.snr.empty() ? l.cfg.eval_snr_db : c.snr;
    const auto rows = evaluate(l.state.model, l.data.test, snrs, eval_options(c, l.cfg));
    const fs::path out = out_file(c, &l.cfg, "eval.csv");
    std::ostringstream csv;
    write_metrics_csv(csv, rows);
    write_text_file(out, csv.str());
    PlotSeries psnr{"n = " + std::to_string(l.state.model.config.n), {}, {}};
    for (const auto& r : rows) {
        psnr.x.push_back(r.snr_db);
        psnr.y.push_back(r.psnr);
    }
    std::ostringstream svg;
    const PlotSeries series[] = {psnr};
    write_svg_plot(svg, "PSNR vs SNR", "SNR (dB)", "PSNR (dB)", series);
    write_text_file(with_svg(out), svg.str());
    std::cout << csv.str();
    return kOk;
}

int cmd_fairness(const Common& c) {
    auto l = load_for_eval(c);
    const auto report = fairness_report(l.state.model, l.data.test, single_snr(c), eval_options(c, l.cfg));
    const fs::path out = out_file(c, &l.cfg, "fairness.csv");
    std::ostringstream csv;
    write_fairness_csv(csv, report);
    write_text_file(out, csv.str());
    PlotSeries s{"per-user PSNR", {}, {}};
    for (std::size_t u = 0; u < report.user_psnr.size(); ++u) {
        s.x.push_back(static_cast<double>(u));
        s.y.push_back(report.user_psnr[u]);
    }
    std::ostringstream svg;
    const PlotSeries series[] = {s};
    write_svg_plot(svg, "Fairness", "user", "PSNR (dB)", series);
    write_text_file(with_svg(out), svg.str());
    std::cout << csv.str();
    return kOk;
}

int cmd_subset(const Common& c, const std::vector<std::size_t>& active) {
    auto l = load_for_eval(c);
    const auto row = subset_eval(l.state.model, active, l.data.test, single_snr(c), eval_options(c, l.cfg));
    const fs::path out = out_file(c, &l.cfg, "subset.csv");
    std::ostringstream csv;
    const MetricsRow rows[] = {row};
    write_metrics_csv(csv, rows);
    write_text_file(out, csv.str());
    std::cout << csv.str();
    return kOk;
}

int cmd_ortho(const Common& c, double bin_width) {
    auto l = load_for_eval(c);
    const std::size_t n = l.state.model.config.n;
    if (l.data.test.size() < n) throw ConfigError("ortho: need at least n test images as probes");
    std::vector<Tensor> probes(l.data.test.images.begin(), l.data.test.images.begin() + static_cast<long>(n));
    const auto angles = orthogonality_angles(l.state.model, probes, single_snr(c));
    const auto hist = angle_histogram(angles, bin_width);
    const fs::path dir = c.out.empty() ? l.cfg.output_dir : fs::path(c.out);
    std::ostringstream matrix, h;
    write_angle_matrix_csv(matrix, angles);
    write_histogram_csv(h, hist);
    write_text_file(dir / "angles.csv", matrix.str());
    write_text_file(dir / "angle_hist.csv", h.str());
    PlotSeries s{"filter pairs", {}, {}};
    for (const auto& b : hist) {
        s.x.push_back(0.5 * (b.low + b.high));
        s.y.push_back(static_cast<double>(b.count));
    }
    std::ostringstream svg;
    const PlotSeries series[] = {s};
    write_svg_plot(svg, "Filter angle histogram", "angle (deg)", "count", series);
    write_text_file(dir / "angle_hist.svg", svg.str());
    const auto flagged = std::count(angles.degenerate.begin(), angles.degenerate.end(), true);
    if (flagged > 0) std::cerr << "warning: " << flagged << " zero-norm filters recorded as NaN\n";
    std::cout << h.str();
    return kOk;
}

int cmd_capacity(const Common& c, std::size_t n_max, double p, double sigma2, const std::string& convention) {
    const auto rows = capacity_curves(n_max, p, sigma2, capacity_convention_from_string(convention));
    const fs::path out = out_file(c, nullptr, "capacity.csv");
    std::ostringstream csv;
    write_capacity_csv(csv, rows);
    write_text_file(out, csv.str());
    PlotSeries mac{"MAC", {}, {}}, tdma{"TDMA", {}, {}};
    for (const auto& r : rows) {
        mac.x.push_back(static_cast<double>(r.n));
        mac.y.push_back(r.c_mac);
        tdma.x.push_back(static_cast<double>(r.n));
        tdma.y.push_back(r.c_tdma);
    }
    std::ostringstream svg;
    const PlotSeries series[] = {mac, tdma};
    write_svg_plot(svg, "Capacity (" + convention + ")", "users", "capacity (multiple of bandwidth)", series);
    write_text_file(with_svg(out), svg.str());
    std::cout << csv.str();
    return kOk;
}

int cmd_params(const Common& c) {
    if (c.checkpoint.empty()) throw ConfigError("params: --checkpoint is required");
    const auto state = load_checkpoint(c.checkpoint);
    const auto report = param_report(state.model);
    std::ostringstream csv;
    write_param_csv(csv, report);
    if (!c.out.empty()) write_text_file(c.out, csv.str());
    std::cout << csv.str();
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Multi-user deep joint source-channel coding over a shared channel"};
    app.require_subcommand(1);

    Common c;
    std::optional<std::size_t> stages;
    std::vector<std::size_t> active;
    std::size_t n_max = 16;
    double p = 1.0, sigma2 = 1.0, bin_width = 5.0;
    std::string convention = "fixed-per-user-power";

    auto add_config = [&](CLI::App* sub, bool required) {
        auto* o = sub->add_option("--config", c.config, "experiment JSON");
        if (required) o->required();
    };
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--checkpoint", c.checkpoint, "checkpoint directory");
        sub->add_option("--out", c.out, "output directory or file");
        sub->add_option("--seed", c.seed, "seed override");
        sub->add_option("--channel", c.channel, "awgn or rayleigh");
    };
    auto add_eval = [&](CLI::App* sub) {
        sub->add_option("--snr", c.snr, "comma-separated SNR list in dB")->delimiter(',');
        sub->add_option("--threads", c.threads, "evaluation workers");
    };

    auto* train = app.add_subcommand("train", "train a model and write checkpoint/ and history.csv");
    add_config(train, true);
    add_common(train);
    auto* dbl = app.add_subcommand("double", "progressive fine-tuning from a parent checkpoint");
    add_config(dbl, true);
    add_common(dbl);
    dbl->add_option("--stages", stages, "number of doublings");
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM/MS-SSIM per SNR on the test split");
    auto* fair = app.add_subcommand("fairness", "per-user PSNR and max pairwise gap");
    auto* subset = app.add_subcommand("subset", "metrics with only --active users transmitting");
    subset->add_option("--active", active, "comma-separated 0-based user indices")->delimiter(',')->required();
    auto* ortho = app.add_subcommand("ortho", "angles between encoding filters");
    ortho->add_option("--bin-width", bin_width, "histogram bin width in degrees");
    for (auto* sub : {eval, fair, subset, ortho}) {
        add_config(sub, true);
        add_common(sub);
        add_eval(sub);
    }
    auto* cap = app.add_subcommand("capacity", "MAC and TDMA capacity versus user count");
    cap->add_option("--n-max", n_max, "largest user count");
    cap->add_option("--p", p, "per-user power");
    cap->add_option("--sigma2", sigma2, "noise variance");
    cap->add_option("--convention", convention, "fixed-per-user-power or fixed-total-power");
    cap->add_option("--out", c.out, "output CSV");
    auto* params = app.add_subcommand("params", "trainable parameter breakdown");
    params->add_option("--checkpoint", c.checkpoint, "checkpoint directory")->required();
    params->add_option("--out", c.out, "output CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (train->parsed()) return cmd_train(c);
        if (dbl->parsed()) return cmd_double(c, stages);
        if (eval->parsed()) return cmd_eval(c);
        if (fair->parsed()) return cmd_fairness(c);
        if (subset->parsed()) return cmd_subset(c, active);
        if (ortho->parsed()) return cmd_ortho(c, bin_width);
        if (cap->parsed()) return cmd_capacity(c, n_max, p, sigma2, convention);
        if (params->parsed()) return cmd_params(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ContractViolation& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kUsageError;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const DegenerateInput& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const DeterminismError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericError;
    }
    return kUsageError;
}

}  // namespace pnoma::cli
