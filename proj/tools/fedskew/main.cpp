#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedskew/errors.hpp"
#include "fedskew/experiment.hpp"

namespace {

struct SubArgs {
    CLI::App* app = nullptr;
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
};

SubArgs add_subcommand(CLI::App& app, const std::string& name,
                       const std::string& description) {
    SubArgs args;
    args.app = app.add_subcommand(name, description);
    args.app->add_option("--config", args.config_path, "experiment config (JSON)")
        ->required();
    args.app->add_option("--out", args.out_dir, "output directory override");
    args.app->add_option("--seed", args.seed, "top-level seed override");
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated-averaging experiments under label-skewed clients"};
    app.require_subcommand(1);

    SubArgs subs[] = {
        add_subcommand(app, "train",
                       "FedAvg vs. the matched centralized baseline; writes rounds.csv"),
        add_subcommand(app, "sweep-emd",
                       "weight divergence and accuracy across a label-skew grid"),
        add_subcommand(app, "verify-bound",
                       "numerical check of the divergence growth bound; writes bound.csv"),
        add_subcommand(app, "share",
                       "globally shared data mitigation; writes sharing.csv"),
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // bad command line is a config error
    }

    const SubArgs* chosen = nullptr;
    for (const SubArgs& s : subs) {
        if (s.app->parsed()) {
            chosen = &s;
        }
    }
    if (chosen == nullptr) {
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        fedskew::ExperimentConfig cfg = fedskew::load_config(chosen->config_path);
        if (chosen->app->count("--out") > 0) {
            cfg.output_dir = chosen->out_dir;
        }
        if (chosen->app->count("--seed") > 0) {
            cfg.seed = chosen->seed;
        }
        return fedskew::run_command(chosen->app->get_name(), cfg);
    } catch (const std::exception& e) {
        std::cerr << fedskew::error_json(e) << "\n";
        return fedskew::exit_code_for(e);
    }
}
