#pragma once

// Subcommand implementations behind the `flad` executable. Each returns the
// process exit code: 0 success, 1 runtime or check failure, 2 usage/config.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "flad/config.hpp"
#include "flad/data.hpp"
#include "flad/experiment.hpp"
#include "flad/nn.hpp"
#include "flad/summary.hpp"

namespace flad {

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

namespace detail {

inline ExperimentConfig load_with_overrides(const std::filesystem::path& path, const CliOverrides& ov) {
    ExperimentConfig cfg = load_config(path);
    if (ov.seed) {
        cfg.seed = *ov.seed;
        cfg.federation.seed = *ov.seed;
    }
    if (ov.out_dir) cfg.output_dir = *ov.out_dir;
    return cfg;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
}

}  // namespace detail

/// Runs one experiment and writes rounds.csv, verdicts.csv and summary.json.
inline int cmd_run(const std::filesystem::path& config, const CliOverrides& ov, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto cfg = detail::load_with_overrides(config, ov);
        const auto res = run_experiment(cfg);
        const std::filesystem::path dir = cfg.output_dir;
        {
            auto f = detail::open_output(dir / "rounds.csv");
            write_rounds_csv(f, res.flad.reports);
        }
        {
            auto f = detail::open_output(dir / "verdicts.csv");
            write_verdicts_csv(f, res.flad.reports, res.malicious);
        }
        {
            auto f = detail::open_output(dir / "summary.json");
            f << summary_json(res.summary).dump(2) << '\n';
        }
        out << "final_accuracy " << fmt17(res.summary.final_accuracy) << '\n';
        if (res.summary.detection_auc) out << "detection_auc " << fmt17(*res.summary.detection_auc) << '\n';
        out << "wrote " << (dir / "summary.json").string() << '\n';
        return exit_ok;
    });
}

inline std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size() || !(v >= 0.0)) throw std::invalid_argument(item);
            grid.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--sf-grid", "invalid sensitivity value '" + item + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (grid.empty()) throw ConfigError("--sf-grid", "empty grid");
    return grid;
}

/// Sensitivity sweep: sweep.csv (averaged per sf) and sweep_raw.csv (per seed).
inline int cmd_sweep(const std::filesystem::path& config, const std::string& sf_grid, std::size_t seeds,
                     const CliOverrides& ov, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto cfg = detail::load_with_overrides(config, ov);
        const auto grid = parse_grid(sf_grid);
        if (seeds == 0) throw ConfigError("--seeds", "must be >= 1");
        std::vector<std::uint64_t> seed_list;
        for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(cfg.seed + i);
        const auto sweep = sweep_sensitivity(
            [&](double sf, std::uint64_t seed) {
                ExperimentConfig c = cfg;
                c.seed = seed;
                c.federation.seed = seed;
                c.federation.sens = Sensitivity::uniform(sf);
                return run_experiment(c).summary;
            },
            grid, seed_list);
        const std::filesystem::path dir = cfg.output_dir;
        {
            auto f = detail::open_output(dir / "sweep.csv");
            write_sweep_csv(f, sweep.rows, false);
        }
        {
            auto f = detail::open_output(dir / "sweep_raw.csv");
            write_sweep_csv(f, sweep.raw, true);
        }
        for (const auto& r : sweep.rows)
            out << "sf " << fmt17(r.sf) << " accuracy " << fmt17(r.final_accuracy) << " anomalies "
                << fmt17(r.total_anomalies) << '\n';
        return exit_ok;
    });
}

/// ROC curve for one detector over (client, round) pairs; writes
/// roc_<detector>.csv and prints the AUC.
inline int cmd_roc(const std::filesystem::path& config, const std::string& detector, const CliOverrides& ov,
                   std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        if (detector != "combined" && detector != "grad" && detector != "recon" && detector != "pca")
            throw ConfigError("--detector", "unknown detector '" + detector + "' (combined, grad, recon, pca)");
        const auto cfg = detail::load_with_overrides(config, ov);
        const auto prep = prepare(cfg);
        std::vector<double> scores;
        std::vector<bool> labels;
        if (detector == "pca") {
            scores = pca_client_round_scores(prep);
            labels = pca_client_round_labels(prep);
        } else {
            const auto res = run_flad(prep.data, prep.round);
            const RocScore which = detector == "combined" ? RocScore::combined
                                   : detector == "grad"   ? RocScore::grad
                                                          : RocScore::recon;
            scores = client_round_scores(res.reports, res.recon_base, which, prep.round.detector.combine);
            labels = client_round_labels(res.reports, prep.malicious);
        }
        const auto roc = roc_curve(scores, labels);
        auto f = detail::open_output(std::filesystem::path(cfg.output_dir) / ("roc_" + detector + ".csv"));
        write_roc_csv(f, roc);
        out << "auc " << detector << ' ' << fmt17(roc.auc) << '\n';
        return exit_ok;
    });
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckCase {
    std::string name;
    double max_rel_error = 0.0;
};

/// Optional hook applied to every backpropagated gradient before comparison
/// (used to inject faults in tests).
using GradientHook = std::function<void(ParamVector&)>;

inline double relative_error(const ParamVector& a, const ParamVector& b) {
    const double scale = std::max({l2_norm(a), l2_norm(b), 1e-12});
    return l2_norm(a - b) / scale;
}

/// Backprop versus central differences (eps 1e-6) for each standard
/// architecture over `seeds` random instances.
inline std::vector<GradcheckCase> run_gradcheck(std::size_t seeds = 20, const GradientHook& hook = {}) {
    constexpr double eps = 1e-6;
    std::vector<GradcheckCase> report;

    auto random_batch = [](std::size_t n, std::size_t d, Rng& rng) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Tensor x = Tensor::matrix(n, d);
        for (double& v : x.data()) v = u(rng);
        return x;
    };

    struct ClassifierCase {
        const char* name;
        MlpConfig cfg;
    };
    const std::vector<ClassifierCase> classifiers = {
        {"classifier relu 16-32-2 (cross-entropy)", {{16, 32, 2}, Activation::relu, OutputHead::softmax_logits}},
        {"classifier tanh 8-16-16-3 (cross-entropy)", {{8, 16, 16, 3}, Activation::tanh, OutputHead::softmax_logits}},
        {"linear softmax 16-2 (cross-entropy)", {{16, 2}, Activation::relu, OutputHead::softmax_logits}},
        {"classifier relu 784-8-10 (cross-entropy)", {{784, 8, 10}, Activation::relu, OutputHead::softmax_logits}},
    };
    for (const auto& cc : classifiers) {
        GradcheckCase rep{cc.name};
        for (std::size_t s = 0; s < seeds; ++s) {
            Rng rng(derive_seed(s, {100}));
            const Model m = Model::glorot(cc.cfg, derive_seed(s, {101}));
            const Tensor x = random_batch(cc.cfg.input_dim() > 100 ? 2 : 8, cc.cfg.input_dim(), rng);
            Labels y(x.rows());
            for (auto& v : y) v = rng() % cc.cfg.output_dim();
            ParamVector bp = backward(m, x, y);
            if (hook) hook(bp);
            rep.max_rel_error = std::max(rep.max_rel_error, relative_error(bp, finite_diff_gradient(m, x, y, eps)));
        }
        report.push_back(rep);
    }

    {
        GradcheckCase rep{"regression tanh 6-12-3 (mse)"};
        const MlpConfig cfg{{6, 12, 3}, Activation::tanh, OutputHead::linear};
        for (std::size_t s = 0; s < seeds; ++s) {
            Rng rng(derive_seed(s, {200}));
            const Model m = Model::glorot(cfg, derive_seed(s, {201}));
            const Tensor x = random_batch(8, 6, rng);
            const Tensor t = random_batch(8, 3, rng);
            ParamVector bp = backward(m, x, t);
            if (hook) hook(bp);
            rep.max_rel_error = std::max(rep.max_rel_error, relative_error(bp, finite_diff_gradient(m, x, t, eps)));
        }
        report.push_back(rep);
    }

    {
        GradcheckCase rep{"autoencoder 16-64-8-64-16 (mse)"};
        for (std::size_t s = 0; s < seeds; ++s) {
            Rng rng(derive_seed(s, {300}));
            const auto ae = Autoencoder::make(16, {64}, 8, derive_seed(s, {301}));
            const Tensor x = random_batch(4, 16, rng);
            ParamVector bp = backward(ae, x);
            if (hook) hook(bp);
            rep.max_rel_error = std::max(rep.max_rel_error, relative_error(bp, finite_diff_gradient(ae, x, eps)));
        }
        report.push_back(rep);
    }
    return report;
}

inline int cmd_gradcheck(std::ostream& out, std::size_t seeds = 20, const GradientHook& hook = {}) {
    constexpr double tolerance = 1e-4;
    const auto report = run_gradcheck(seeds, hook);
    double worst = 0.0;
    for (const auto& c : report) {
        out << c.name << ": max relative error " << fmt17(c.max_rel_error) << '\n';
        worst = std::max(worst, c.max_rel_error);
    }
    out << "max relative error " << fmt17(worst) << (worst < tolerance ? " (ok)" : " (FAILED)") << '\n';
    return worst < tolerance ? exit_ok : exit_failure;
}

// ---------------------------------------------------------------------------
// Synthetic data export

inline int cmd_gen_data(const SyntheticSource& src, std::uint64_t seed, const std::filesystem::path& out_path,
                        std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        if (src.k < 2) throw ConfigError("--k", "must be >= 2");
        if (src.per_class < 1) throw ConfigError("--per-class", "must be >= 1");
        if (src.d_in < 1) throw ConfigError("--d-in", "must be >= 1");
        if (!(src.std_dev >= 0.0)) throw ConfigError("--std", "must be non-negative");
        const auto ds = gen_synthetic(src.k, src.per_class, src.d_in, src.class_sep, src.std_dev, seed);
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw Error("cannot write " + out_path.string());
        write_csv(ds, f);
        if (!f) throw Error("write failed for " + out_path.string());
        out << "wrote " << ds.size() << " rows to " << out_path.string() << '\n';
        return exit_ok;
    });
}

}  // namespace flad
