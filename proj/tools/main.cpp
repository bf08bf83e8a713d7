#include <iostream>

#include <CLI11.hpp>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"cfdist: counterfactual distributions, bootstrap bands and wage decompositions"};
    app.require_subcommand(1);

    cfdist::cli::Invocation inv;
    std::uint64_t seed = 0;
    std::string out_dir;

    const auto add = [&](const std::string& name, const std::string& description) {
        auto* sub = app.add_subcommand(name, description);
        sub->add_option("config", inv.config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "Override the master seed");
        sub->add_option("--out", out_dir, "Override the output directory");
        sub->add_option("--threads", inv.threads, "Worker threads (results do not depend on it)")
            ->check(CLI::Range(1u, 1024u));
        sub->callback([&, name, sub] {
            inv.command = name;
            if (sub->count("--seed") > 0) {
                inv.seed = seed;
            }
            if (sub->count("--out") > 0) {
                inv.output_dir = out_dir;
            }
        });
    };
    add("fit", "Fit the configured conditional model on one group");
    add("counterfactual", "Counterfactual marginals, effects and uniform bands");
    add("decompose", "Four-effect decomposition of the change between the groups");
    add("bands-audit", "Dump the bootstrap draw matrix behind the bands");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return cfdist::cli::run(inv, std::cerr);
}
