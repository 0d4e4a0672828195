#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "semcom/app.hpp"

int main(int argc, char** argv) {
    using namespace semcom;

    CLI::App app{"semcom: text semantic-communication simulator (prep, train, finetune, sweep, plot)"};
    app.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    bool force = false;
    std::size_t parallelism = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "INI run configuration")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "overrides [run] seed");
        cmd->add_option("--out", out, "output root; overrides $SEMCOM_OUT_ROOT and [run] out");
        cmd->add_flag("--force", force, "replace existing outputs");
    };

    auto* prep = app.add_subcommand("prep", "clean, trim, tokenize, split and encode the raw corpus");
    add_common(prep);
    auto* train = app.add_subcommand(
        "train", "train from scratch; the final partial batch of every epoch is dropped so each step has B rows");
    add_common(train);
    auto* finetune = app.add_subcommand("finetune", "resume training from a checkpoint at a reduced learning rate");
    add_common(finetune);
    auto* sweep = app.add_subcommand("sweep", "estimate p(eta_min) over the configured interferer counts");
    add_common(sweep);
    sweep->add_option("--parallelism", parallelism, "worker threads for slot evaluation")
        ->check(CLI::PositiveNumber);

    std::string csv;
    std::string image;
    auto* plot = app.add_subcommand("plot", "render a history or sweep CSV as an SVG line plot");
    plot->add_option("csv", csv, "history.csv or sweep.csv")->required();
    plot->add_option("image", image, "output .svg path")->required();
    plot->add_flag("--force", force, "replace an existing image");

    CLI11_PARSE(app, argc, argv);

    try {
        if (plot->parsed()) {
            cmd_plot(csv, image, force);
            return 0;
        }
        ConfigOverrides ov;
        CLI::App* cmd = app.get_subcommands().front();
        if (cmd->count("--seed")) ov.seed = seed;
        if (cmd->count("--out")) ov.out = out;
        const RunConfig cfg = load_run_config(config, ov);
        CommandOptions opt{force, parallelism, &std::cout};
        if (prep->parsed()) {
            cmd_prep(cfg, opt);
        } else if (train->parsed()) {
            cmd_train(cfg, opt);
        } else if (finetune->parsed()) {
            cmd_finetune(cfg, opt);
        } else if (sweep->parsed()) {
            cmd_sweep(cfg, opt);
        }
    } catch (const UsageError& e) {
        std::cerr << "semcom: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "semcom: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
