// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance <toy-config.json> <work-dir>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "pnoma/analysis.hpp"
#include "pnoma/data.hpp"
#include "pnoma/experiment.hpp"
#include "pnoma/metrics.hpp"
#include "pnoma/ops.hpp"
#include "pnoma/training.hpp"

using namespace pnoma;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    return files;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

// Toy pipeline through the command-line entry point: train n = 1, two
// doublings with fine-tuning, evaluation of the n = 4 model.
bool run_pipeline(const std::string& config, const fs::path& out) {
    fs::remove_all(out);
    const std::string dir = out.string();
    return cli::run({"train", "--config", config, "--out", dir}) == 0 &&
           cli::run({"double", "--config", config, "--checkpoint", (out / "checkpoint").string(), "--out", dir,
                     "--stages", "2"}) == 0 &&
           cli::run({"eval", "--config", config, "--checkpoint", (out / "n4").string(), "--out",
                     (out / "eval_n4.csv").string()}) == 0;
}

TupleIndexSet val_tuples(const ExperimentConfig& cfg, const ImageDataset& val, std::size_t n) {
    RngStream s = RngStream(cfg.train.seed, StreamId::EvalTuples).fork(n);
    return build_eval_tuples(val.size(), n, s);
}

std::vector<Tensor> noiseless_reconstructions(const SystemModel& model, const std::vector<Tensor>& images) {
    NoGradGuard guard;
    auto draw = make_draw(std::vector<std::complex<double>>(images.size(), {1.0, 0.0}), 10.0, model.config.p_bar);
    draw.sigma = 0.0;
    RngStream unused(0, 0);
    return forward_system(images, model, draw, unused).reconstructions;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    const std::size_t expected8[] = {2048, 8192, 32768, 131072};
    const std::size_t expected4[] = {512, 2048, 8192, 32768};
    std::ostringstream detail;
    bool ok = true;
    for (std::size_t m : {8u, 4u}) {
        RngStream rng(1, StreamId::Codebook);
        auto cb = init_single_user(m);
        for (std::size_t r = 0; r < 4; ++r) {
            cb = double_users(cb, rng);
            std::size_t literal = 0;
            for (const auto& p : cb.pairs)
                if (p.trainable && p.enc.requires_grad() && p.dec.requires_grad())
                    literal += p.enc.numel() + p.dec.numel();
            const std::size_t want = m == 8 ? expected8[r] : expected4[r];
            ok = ok && literal == want;
            detail << "m=" << m << ",n=" << cb.n << ":" << literal << (r == 3 && m == 8 ? "; " : r < 3 ? " " : "");
        }
    }
    return {ok, detail.str()};
}

Outcome criterion2(const ExperimentConfig& cfg, const Datasets& data, const fs::path& run) {
    const TrainState base = load_checkpoint(run / "checkpoint");
    const TrainState stage1 = load_checkpoint(run / "n2");
    double worst_equal = 0.0, worst_isolation = 0.0;
    double smallest_same_group_change = INFINITY;
    for (const TrainState* parent : {&base, &stage1}) {
        TrainState p = parent->clone();
        p.seed = cfg.seed;
        const TrainState child = double_state(p);
        const std::size_t np = p.model.config.n, n = child.model.config.n;
        const auto tuples = val_tuples(cfg, data.val, n);
        for (std::size_t t = 0; t < tuples.size(); ++t) {
            std::vector<Tensor> images;
            for (auto i : tuples.rows[t]) images.push_back(data.val[i]);
            const auto out = noiseless_reconstructions(child.model, images);
            for (std::size_t g = 0; g < 2; ++g) {
                const std::vector<Tensor> group(images.begin() + static_cast<long>(g * np),
                                                images.begin() + static_cast<long>((g + 1) * np));
                const auto ref = noiseless_reconstructions(p.model, group);
                for (std::size_t u = 0; u < np; ++u) {
                    const auto a = out[g * np + u].data(), b = ref[u].data();
                    for (std::size_t k = 0; k < a.size(); ++k) worst_equal = std::max(worst_equal, std::abs(a[k] - b[k]));
                }
            }
            // Replace the other group's images with images from the next tuple.
            const auto& other = tuples.rows[(t + 1) % tuples.size()];
            for (std::size_t g = 0; g < 2; ++g) {
                auto perturbed = images;
                for (std::size_t u = 0; u < np; ++u) perturbed[(1 - g) * np + u] = data.val[other[(1 - g) * np + u]];
                const auto moved = noiseless_reconstructions(child.model, perturbed);
                for (std::size_t u = 0; u < np; ++u) {
                    const auto a = out[g * np + u].data(), b = moved[g * np + u].data();
                    for (std::size_t k = 0; k < a.size(); ++k)
                        worst_isolation = std::max(worst_isolation, std::abs(a[k] - b[k]));
                }
            }
            if (np > 1) {
                // Control: changing a user in the same group must be visible.
                auto same = images;
                same[1] = data.val[other[1]];
                const auto moved = noiseless_reconstructions(child.model, same);
                double change = 0.0;
                const auto a = out[0].data(), b = moved[0].data();
                for (std::size_t k = 0; k < a.size(); ++k) change = std::max(change, std::abs(a[k] - b[k]));
                smallest_same_group_change = std::min(smallest_same_group_change, change);
            }
        }
    }
    const bool ok = worst_equal < 1e-9 && worst_isolation < 1e-9 && smallest_same_group_change > 1e-6;
    return {ok, "max |child - parent| = " + fmt(worst_equal, 3) + ", max change from other group = " +
                    fmt(worst_isolation, 3) + ", min change from own group = " + fmt(smallest_same_group_change, 3) +
                    " (n=1->2 and n=2->4)"};
}

Outcome criterion3(const ExperimentConfig& cfg, const Datasets& data, const fs::path& run) {
    TrainState state = load_checkpoint(run / "checkpoint");
    state.seed = cfg.seed;
    const Tensor probe[] = {data.val[0]};
    double worst_angle = 0.0, worst_unitary = 0.0;
    auto cross_group = [&](const SystemModel& model, std::size_t groups) {
        const auto angles = orthogonality_angles(model, probe, 10.0);
        const std::size_t per_group = angles.size() / groups;
        for (std::size_t r = 0; r < angles.size(); ++r)
            for (std::size_t c = 0; c < angles.size(); ++c)
                if (r / per_group != c / per_group) worst_angle = std::max(worst_angle, std::abs(angles.at(r, c) - 90.0));
    };
    // Fresh codebooks from the identity: every user is its own group.
    for (std::size_t r = 0; r < 4; ++r) {
        state = double_state(state);
        const auto& model = state.model;
        for (const auto& pair : model.codebook.pairs) {
            const auto p = ComplexMatrix::from_realified(pair.enc);
            worst_unitary = std::max(worst_unitary,
                                     (p * p.conj_transpose()).max_abs_diff(ComplexMatrix::identity(p.rows())));
        }
        cross_group(model, model.config.n);
    }
    // Doubling a fine-tuned n = 2 parent: the two halves are the groups.
    TrainState tuned = load_checkpoint(run / "n2");
    tuned.seed = cfg.seed;
    cross_group(double_state(tuned).model, 2);
    const bool ok = worst_angle < 1e-6 && worst_unitary < 1e-10;
    return {ok, "max |angle - 90| = " + fmt(worst_angle, 3) + " deg, max |P P^H - I| = " + fmt(worst_unitary, 3) +
                    " (n=2..16 fresh, n=4 from tuned n=2)"};
}

Outcome criterion4(const ExperimentConfig& cfg) {
    RngStream rng(404, 1);
    double worst = 0.0;
    std::size_t passes = 0, vectors = 0;
    NoGradGuard guard;
    for (std::size_t n : {1u, 2u, 4u}) {
        SystemConfig sc = cfg.system;
        sc.n = n;
        RngStream init = rng.fork(n);
        SystemModel model = make_system(sc, init);
        const std::size_t count = n == 1 ? 3334 : 3333;
        for (std::size_t it = 0; it < count; ++it) {
            model.config.p_bar = rng.uniform(0.25, 4.0);
            std::vector<Tensor> images;
            for (std::size_t u = 0; u < n; ++u) {
                std::vector<double> v(sc.in_channels * sc.height * sc.width);
                for (auto& x : v) x = rng.uniform();
                images.push_back(Tensor::from({sc.in_channels, sc.height, sc.width}, std::move(v)));
            }
            const auto draw =
                make_draw(sample_gains(ChannelKind::Rayleigh, n, rng), rng.uniform(0, 20), model.config.p_bar);
            const auto out = forward_system(images, model, draw, rng);
            const double target = model.config.p_bar / static_cast<double>(n);
            for (const auto& z : out.transmitted) {
                worst = std::max(worst, std::abs(z.mean_power() / target - 1.0));
                ++vectors;
            }
            ++passes;
        }
    }
    return {worst < 1e-12, std::to_string(passes) + " passes, " + std::to_string(vectors) +
                               " vectors, max relative power error " + fmt(worst, 3)};
}

Outcome criterion5(const ExperimentConfig& cfg) {
    // Toy architecture with every parameter tensor sampled, then a reduced
    // architecture with every scalar checked.
    double worst = 0.0;
    std::size_t tensors = 0;
    std::string failure;
    auto check = [&](SystemConfig sc, std::size_t max_elements) {
        sc.n = 2;
        RngStream init(505, StreamId::ParamInit), data(505, StreamId::Synthetic);
        const SystemModel model = make_system(sc, init);
        const auto ds = gen_synthetic(2, sc.width, sc.height, data);
        const auto draw = make_draw({{0.8, -0.5}, {0.3, 1.1}}, 10.0, sc.p_bar);
        auto build = [&] {
            RngStream noise(505, StreamId::TrainChannel);
            const auto out = forward_system(ds.images, model, draw, noise);
            return loss(ds.images, out.reconstructions);
        };
        const auto report = grad_check(build, model.trainable(), {.tolerance = 1e-4, .max_elements = max_elements});
        for (const auto& e : report.entries) worst = std::max(worst, e.max_rel_error);
        tensors += report.entries.size();
        if (failure.empty()) failure = report.first_failure();
    };
    check(cfg.system, 32);
    SystemConfig small = cfg.system;
    small.width = small.height = 8;
    small.filters = 4;
    check(small, 0);
    return {failure.empty() && worst < 1e-4,
            std::to_string(tensors) + " tensors, max relative error " + fmt(worst, 3) +
                (failure.empty() ? "" : ", first failure " + failure)};
}

Outcome criterion6() {
    const auto rows = capacity_curves(16, 1.0, 1.0, CapacityConvention::FixedPerUserPower);
    bool ok = std::abs(rows[2].c_mac / rows[2].c_tdma - 2.0) <= 1e-12 && rows[0].c_mac == rows[0].c_tdma;
    for (std::size_t i = 1; i < rows.size(); ++i) ok = ok && rows[i].c_mac > rows[i - 1].c_mac;
    return {ok, "C_MAC(3)/C_TDMA(3) = " + fmt(rows[2].c_mac / rows[2].c_tdma, 17) + ", C_MAC(1) = C_TDMA(1) = " +
                    fmt(rows[0].c_mac) + ", C_MAC(16) = " + fmt(rows[15].c_mac)};
}

Outcome criterion7(const ExperimentConfig& cfg, const Datasets& data, const fs::path& run) {
    const auto table = read_csv(run / "stage_init.csv");
    TrainState parent = load_checkpoint(run / "checkpoint");
    parent.seed = cfg.seed;
    bool ok = table.size() == 3;
    std::ostringstream detail;
    for (std::size_t s = 1; s <= 2 && ok; ++s) {
        const TrainState child = double_state(parent);
        TrainState exported = load_checkpoint(run / ("n" + std::to_string(child.model.config.n)));
        exported.seed = cfg.seed;
        const std::size_t n = child.model.config.n;
        const double p = validation_psnr(parent.model, data.val, val_tuples(cfg, data.val, n / 2), cfg.train);
        const double start = validation_psnr(child.model, data.val, val_tuples(cfg, data.val, n), cfg.train);
        const double final_psnr = validation_psnr(exported.model, data.val, val_tuples(cfg, data.val, n), cfg.train);
        // The table written by the run must agree with the recomputation.
        const double logged_start = std::stod(table[s][3]), logged_final = std::stod(table[s][4]);
        ok = ok && std::abs(logged_start - start) < 1e-9 && std::abs(logged_final - final_psnr) < 1e-9;
        ok = ok && final_psnr >= start && std::abs(start - p) <= 0.1;
        detail << "n=" << n << ": parent " << fmt(p, 6) << ", start " << fmt(start, 6) << ", final "
               << fmt(final_psnr, 6) << " dB" << (s == 1 ? "; " : "");
        parent = exported;
    }
    return {ok, detail.str()};
}

Outcome criterion8() {
    struct Case {
        std::size_t N, n, T;
    };
    bool ok = true;
    std::ostringstream detail;
    for (const Case c : {Case{4, 2, 4}, Case{45, 4, 135}, Case{64, 8, 192}}) {
        RngStream rng(808, StreamId::TrainTuples);
        const auto train = build_train_tuples(c.N, c.n, c.T, rng);
        std::vector<std::size_t> uses(c.N, 0);
        for (const auto& row : train.rows) {
            ok = ok && row.size() == c.n;
            for (auto i : row) ++uses[i];
        }
        const double ideal = static_cast<double>(c.n * c.T) / static_cast<double>(c.N);
        for (auto u : uses) ok = ok && std::abs(static_cast<double>(u) - ideal) <= 1.0;
        ok = ok && train.size() == c.T;

        RngStream er(808, StreamId::EvalTuples);
        const auto eval = build_eval_tuples(c.N, c.n, er);
        std::vector<std::size_t> seen(c.N, 0);
        for (const auto& row : eval.rows)
            for (auto i : row) ++seen[i];
        const auto once = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
        const auto more = static_cast<std::size_t>(std::count_if(seen.begin(), seen.end(), [](auto v) { return v > 1; }));
        ok = ok && eval.size() == c.N / c.n && once == eval.size() * c.n && more == 0;
        const auto [lo, hi] = std::minmax_element(uses.begin(), uses.end());
        detail << "(" << c.N << "," << c.n << "," << c.T << "): uses " << *lo << ".." << *hi << ", eval " << once
               << "/" << c.N << " once; ";
    }
    return {ok, detail.str()};
}

Outcome criterion9() {
    bool ok = true;
    double worst = 0.0;
    auto close = [&](double got, double want) {
        worst = std::max(worst, std::abs(got - want));
        ok = ok && std::abs(got - want) < 1e-9;
    };
    const Shape shape{3, 16, 16};
    const auto zeros = Tensor::zeros(shape);
    RngStream rng(909, 1);
    std::vector<double> r(shape_numel(shape));
    for (auto& v : r) v = rng.uniform();
    const auto x = Tensor::from(shape, r);
    ok = ok && metrics::psnr(x, x) == metrics::kPsnrCap;
    close(metrics::psnr(zeros, Tensor::full(shape, 1.0)), 0.0);
    std::vector<double> tenth(shape_numel(shape));
    for (std::size_t i = 0; i < tenth.size(); ++i) tenth[i] = (i % 2 ? 1.0 : -1.0) / std::sqrt(10.0);
    close(metrics::psnr(zeros, Tensor::from(shape, tenth)), 10.0);

    const double c1 = 1e-4, c2 = 9e-4;
    const double ssim_const = (2 * 0.2 * 0.8 + c1) * c2 / ((0.04 + 0.64 + c1) * c2);
    close(metrics::ssim(Tensor::full(shape, 0.2), Tensor::full(shape, 0.8)), ssim_const);
    close(metrics::ms_ssim_auto(Tensor::full(shape, 0.2), Tensor::full(shape, 0.8)), ssim_const);
    const double one[] = {1.0};
    for (std::size_t f : {1u, 2u, 4u, 8u, 11u, 16u})
        ok = ok && metrics::ms_ssim_max_scales(16, 16, f) ==
                       static_cast<std::size_t>(std::floor(std::log2(16.0 / static_cast<double>(f)))) + 1;

    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(shape_numel(shape)), b(shape_numel(shape));
        for (auto& v : a) v = rng.uniform();
        for (std::size_t k = 0; k < b.size(); ++k) b[k] = std::clamp(a[k] + 0.3 * rng.normal(), 0.0, 1.0);
        const auto ta = Tensor::from(shape, a), tb = Tensor::from(shape, b);
        close(metrics::ssim(ta, ta), 1.0);
        close(metrics::ms_ssim_auto(ta, ta), 1.0);
        ok = ok && std::abs(metrics::ssim(ta, tb) - metrics::ssim(tb, ta)) < 1e-12;
        close(metrics::ms_ssim(ta, tb, one, 11), metrics::ssim(ta, tb));
    }
    return {ok, "max deviation from closed forms " + fmt(worst, 3) + " over PSNR/SSIM/MS-SSIM oracles and 100 pairs"};
}

Outcome criterion10(const fs::path& a, const fs::path& b) {
    const auto ta = tree(a), tb = tree(b);
    std::size_t differing = 0, checkpoints = 0, csvs = 0;
    for (const auto& [name, bytes] : ta) {
        const auto it = tb.find(name);
        if (it == tb.end() || it->second != bytes) ++differing;
        if (name.ends_with("params.bin")) ++checkpoints;
        if (name.ends_with(".csv")) ++csvs;
    }
    const bool ok = differing == 0 && ta.size() == tb.size() && checkpoints == 3 && csvs >= 4;
    return {ok, std::to_string(ta.size()) + " files compared (" + std::to_string(checkpoints) + " checkpoints, " +
                    std::to_string(csvs) + " CSVs), " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: acceptance <toy-config.json> <work-dir>\n";
        return 2;
    }
    const std::string config = argv[1];
    const fs::path work = argv[2];
    auto cfg = load_experiment(config);
    apply_seed_overrides(cfg, std::nullopt);
    const auto data = load_datasets(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    const bool run_a = run_pipeline(config, work / "run_a");
    const bool run_b = run_pipeline(config, work / "run_b");
    const double pipeline_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "toy pipeline (train n=1, double to 4, eval) run twice in " << fmt(pipeline_s, 3) << " s\n";

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"projection parameter counts", [] { return criterion1(); }},
        {"zero interference at doubling", [&] { return criterion2(cfg, data, work / "run_a"); }},
        {"orthogonality structure", [&] { return criterion3(cfg, data, work / "run_a"); }},
        {"power constraint", [&] { return criterion4(cfg); }},
        {"gradient correctness", [&] { return criterion5(cfg); }},
        {"capacity sanity", [] { return criterion6(); }},
        {"fine-tuning non-degradation", [&] { return criterion7(cfg, data, work / "run_a"); }},
        {"tuple construction", [] { return criterion8(); }},
        {"metric oracles", [] { return criterion9(); }},
        {"determinism", [&] { return criterion10(work / "run_a", work / "run_b"); }},
    };
    const bool pipeline_ok = run_a && run_b;
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        const bool needs_pipeline = i == 1 || i == 2 || i == 6 || i == 9;
        if (needs_pipeline && !pipeline_ok) {
            o = {false, "toy pipeline failed"};
        } else {
            try {
                o = criteria[i].second();
            } catch (const std::exception& e) {
                o = {false, std::string("exception: ") + e.what()};
            }
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << " [" << fmt(secs, 3) << " s]\n";
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
