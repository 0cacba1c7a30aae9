// Command-line driver: run, list and validate experiment configs.

#include <iostream>

#include "CLI11.hpp"
#include "rwre/config.hpp"
#include "rwre/experiments.hpp"

using namespace rwre;

int main(int argc, char** argv) {
    CLI::App app{"Random walks in balanced random environments: numerical experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out = "runs";
    int workers = 1;
    std::optional<std::uint64_t> seed_override;

    auto* run = app.add_subcommand("run", "run an experiment and write config.json, data.csv, summary.json");
    run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    run->add_option("--out", out, "output root directory");
    run->add_option("--seed-override", seed_override, "replace the config's master seed");

    auto* list = app.add_subcommand("list", "list experiment names");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a config against the schema and resource caps");
    validate->add_option("config", validate_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            for (const auto& n : experiment_names()) std::cout << n << '\n';
            return 0;
        }
        if (*validate) {
            const auto c = ExperimentConfig::load(validate_path);
            check_resources(c);
            std::cout << "ok: " << c.experiment << " (schema " << c.schema << ")\n";
            return 0;
        }
        auto c = ExperimentConfig::load(config_path);
        if (seed_override) c.seed = *seed_override;
        const auto rep = run_experiment(c, workers);
        const auto dir = write_report(rep, out);
        for (const auto& v : rep.verdicts) std::cout << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << '\n';
        std::cout << "wrote " << dir.string() << " (" << rep.wall_seconds << " s)\n";
        return rep.passed() ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ResourceError& e) {
        std::cerr << "resource cap: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
