#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "planecycle/cli.hpp"

namespace {

void add_common(CLI::App* sub, planecycle::CliConfig& cfg) {
    sub->add_option("--mode", cfg.mode, "lifting mode: 2d, 3d, pcm, or pcg")->default_str("pcg");
    sub->add_option("--schedule", cfg.schedule, "plane pattern override, e.g. hw,dw,dh,hw");
    sub->add_option("--weights", cfg.weights, "weights archive path");
    sub->add_option("--input", cfg.input, "input archive path");
    sub->add_option("--output", cfg.output, "output path (archive or image basename)");
    sub->add_option("--seed", cfg.seed, "seed for synthetic weights and projections");
    sub->add_option("--threads", cfg.threads, "worker threads")->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv) {
    planecycle::CliConfig cfg;
    CLI::App app{"training-free 2D-to-3D feature lifting for frozen transformer backbones"};
    app.require_subcommand(1);

    CLI::App* lift = app.add_subcommand("lift", "lift a volume and write a feature archive");
    add_common(lift, cfg);
    lift->callback([&] { cfg.command = planecycle::Command::Lift; });

    CLI::App* featdice = app.add_subcommand("featdice", "zero-training feature coherence score");
    add_common(featdice, cfg);
    featdice->callback([&] { cfg.command = planecycle::Command::FeatDice; });

    CLI::App* pca = app.add_subcommand("pca", "write three-plane PCA projection images");
    add_common(pca, cfg);
    pca->callback([&] { cfg.command = planecycle::Command::Pca; });

    CLI::App* bench = app.add_subcommand("bench", "attention-cost model and wall-time benchmark");
    add_common(bench, cfg);
    bench->add_option("--dims", cfg.dims, "token grids: N (cube) or DxHxW, repeatable")
        ->delimiter(',');
    bench->add_option("--repeats", cfg.repeats, "timed runs per configuration")->check(CLI::PositiveNumber);
    bench->add_option("--cost-g", cfg.cost_g, "global-token count override for the pair model");
    bench->add_option("--depth", cfg.synth_depth, "synthetic network depth")->check(CLI::PositiveNumber);
    bench->add_option("--channels", cfg.synth_channels, "synthetic network width")->check(CLI::PositiveNumber);
    bench->add_option("--heads", cfg.synth_heads, "synthetic attention heads")->check(CLI::PositiveNumber);
    bench->add_option("--save-weights", cfg.save_weights, "also write the benchmarked weights archive");
    bench->callback([&] { cfg.command = planecycle::Command::Bench; });

    CLI::App* selftest = app.add_subcommand("selftest", "run the embedded invariant suite");
    selftest->callback([&] { cfg.command = planecycle::Command::Selftest; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    return planecycle::run_cli(cfg, std::cout, std::cerr);
}
