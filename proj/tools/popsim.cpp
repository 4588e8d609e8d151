// popsim command-line tool. All work goes through the C interface.

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "popsim/popsim.h"

namespace {

struct Flag {
    const char* key;
    const char* help;
};

const std::vector<Flag> kFlags{
    {"protocol", "majority, backup, clock, sizeest or epidemic"},
    {"n", "population size"},
    {"gap", "initial #A - #B (majority, backup)"},
    {"seed", "RNG seed (falls back to POPSIM_SEED)"},
    {"trials", "independent runs"},
    {"p", "drip probability"},
    {"k", "minutes per hour"},
    {"L", "exponent depth"},
    {"counter-mult", "counter multiplier, one value or c0..c8 comma-separated"},
    {"preset", "paper-sim or paper-proof"},
    {"stop", "silent or time=T"},
    {"snapshot-dt", "parallel time between timeline snapshots"},
    {"project", "comma-separated fields for timeline keys"},
    {"mark", "comma-separated extra snapshot times"},
    {"out", "output root directory"},
    {"label", "run directory name (default: UTC timestamp)"},
    {"jobs", "worker threads for trials"},
    {"guard", "parallel-time guard per run"},
    {"tolerance", "relative tolerance for experiment verdicts"},
    {"a", "experiment parameter a"},
    {"b", "experiment parameter b"},
    {"d", "experiment parameter d"},
    {"b1", "experiment parameter b1"},
    {"b2", "experiment parameter b2"},
    {"first-minute", "first sampled minute (minutes experiment)"},
    {"last-minute", "last sampled minute (minutes experiment)"},
};

int exit_code(popsim_status status) {
    switch (status) {
    case POPSIM_OK: return 0;
    case POPSIM_ERR_CORRECTNESS: return 2;
    case POPSIM_ERR_GUARD: return 3;
    default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Population protocol simulator"};
    app.set_version_flag("--version", std::string(popsim_version()));
    app.require_subcommand(1);
    app.fallthrough();

    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    for (const auto& flag : kFlags)
        options[flag.key] = app.add_option(std::string("--") + flag.key, values[flag.key], flag.help);
    std::string config_path;
    app.add_option("--config", config_path, "key = value settings file (flags win)")->check(CLI::ExistingFile);

    auto* run = app.add_subcommand("run", "run one protocol and write result files");
    auto* sweep = app.add_subcommand("sweep", "run a protocol over a list of n or gap values");
    std::string axis, axis_values;
    sweep->add_option("--axis", axis, "n or gap")->required()->check(CLI::IsMember({"n", "gap"}));
    sweep->add_option("--values", axis_values, "comma-separated axis values")->required();
    auto* experiment = app.add_subcommand("experiment", "check a timing prediction statistically");
    std::string name;
    experiment->add_option("name", name, "epidemic, cancel, one-sided or minutes")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    std::unique_ptr<popsim_config, decltype(&popsim_config_free)> config(popsim_config_new(), popsim_config_free);
    if (!config) {
        std::fprintf(stderr, "popsim: out of memory\n");
        return 1;
    }
    if (!config_path.empty() && popsim_config_load(config.get(), config_path.c_str()) != POPSIM_OK) {
        std::fprintf(stderr, "popsim: %s\n", popsim_last_error());
        return 1;
    }
    for (const auto& [key, option] : options) {
        if (option->count() == 0) continue;
        if (popsim_config_set(config.get(), key.c_str(), values[key].c_str()) != POPSIM_OK) {
            std::fprintf(stderr, "popsim: %s\n", popsim_last_error());
            return 1;
        }
    }

    popsim_status status = POPSIM_OK;
    if (run->parsed()) {
        status = popsim_run(config.get());
    } else if (sweep->parsed()) {
        status = popsim_sweep(config.get(), axis.c_str(), axis_values.c_str());
    } else if (experiment->parsed()) {
        status = popsim_experiment(config.get(), name.c_str());
    }

    if (*popsim_last_summary()) std::printf("%s\n", popsim_last_summary());
    if (*popsim_last_output_dir()) std::printf("wrote %s\n", popsim_last_output_dir());
    if (status != POPSIM_OK) std::fprintf(stderr, "popsim: %s\n", popsim_last_error());
    return exit_code(status);
}
