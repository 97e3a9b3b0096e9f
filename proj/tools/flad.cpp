#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "flad/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"flad: federated learning with gradient and reconstruction anomaly screening"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out-dir", out_dir, "override the config output directory");
    };

    auto* run = app.add_subcommand("run", "run one experiment");
    add_common(run);

    auto* sweep = app.add_subcommand("sweep", "sweep the sensitivity factor");
    add_common(sweep);
    std::string grid = "0.5,1,2,3";
    std::size_t seeds = 5;
    sweep->add_option("--sf-grid", grid, "comma-separated sensitivity values");
    sweep->add_option("--seeds", seeds, "seeds per grid point");

    auto* roc = app.add_subcommand("roc", "ROC curve of one detector");
    add_common(roc);
    std::string detector = "combined";
    roc->add_option("--detector", detector, "combined | grad | recon | pca");

    auto* gradcheck = app.add_subcommand("gradcheck", "backprop vs finite differences");
    std::size_t check_seeds = 20;
    gradcheck->add_option("--seeds", check_seeds, "random instances per architecture");

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
    flad::SyntheticSource src;
    std::uint64_t gen_seed = 0;
    std::string out_path;
    gen->add_option("--k", src.k, "classes");
    gen->add_option("--per-class", src.per_class, "samples per class");
    gen->add_option("--d-in", src.d_in, "feature dimension");
    gen->add_option("--class-sep", src.class_sep, "distance of class means from the origin");
    gen->add_option("--std", src.std_dev, "noise standard deviation");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", out_path, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? flad::exit_ok : flad::exit_usage;
    }

    const flad::CliOverrides ov{seed, out_dir};
    if (*run) return flad::cmd_run(config, ov, std::cout, std::cerr);
    if (*sweep) return flad::cmd_sweep(config, grid, seeds, ov, std::cout, std::cerr);
    if (*roc) return flad::cmd_roc(config, detector, ov, std::cout, std::cerr);
    if (*gradcheck) return flad::cmd_gradcheck(std::cout, check_seeds);
    if (*gen) return flad::cmd_gen_data(src, gen_seed, out_path, std::cout, std::cerr);
    return flad::exit_usage;
}
