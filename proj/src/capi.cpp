#include "popsim/popsim.h"

#include <filesystem>
#include <string>

#include "popsim/commands.hpp"
#include "popsim/engine.hpp"
#include "popsim/majority.hpp"

struct popsim_config {
    popsim::Settings settings;
};

struct popsim_sim {
    popsim::MajorityProtocol proto;
    popsim::Population<popsim::AgentState> pop;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_dir;
thread_local std::string last_summary;

template <class F>
popsim_status guarded(F&& body) {
    last_error.clear();
    try {
        return body();
    } catch (const popsim::ConfigError& e) {
        last_error = e.what();
        return POPSIM_ERR_CONFIG;
    } catch (const std::filesystem::filesystem_error& e) {
        last_error = e.what();
        return POPSIM_ERR_IO;
    } catch (const std::invalid_argument& e) {
        last_error = e.what();
        return POPSIM_ERR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        last_error = e.what();
        return POPSIM_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return POPSIM_ERR_INTERNAL;
    }
}

popsim_status missing(const char* what) {
    last_error = std::string(what) + " is null";
    return POPSIM_ERR_INVALID_ARGUMENT;
}

popsim_status finish(const popsim::CommandResult& r) {
    last_dir = r.directory;
    last_summary = r.summary;
    switch (r.outcome) {
    case popsim::Outcome::Ok: return POPSIM_OK;
    case popsim::Outcome::Config: return POPSIM_ERR_CONFIG;
    case popsim::Outcome::Correctness:
        last_error = "correctness failure: " + r.summary;
        return POPSIM_ERR_CORRECTNESS;
    case popsim::Outcome::Guard:
        last_error = "guard exhausted before silence";
        return POPSIM_ERR_GUARD;
    }
    return POPSIM_ERR_INTERNAL;
}

}  // namespace

extern "C" {

const char* popsim_version(void) { return "0.1.0"; }
const char* popsim_last_error(void) { return last_error.c_str(); }
const char* popsim_last_output_dir(void) { return last_dir.c_str(); }
const char* popsim_last_summary(void) { return last_summary.c_str(); }

popsim_config* popsim_config_new(void) {
    try {
        return new popsim_config{};
    } catch (...) {
        return nullptr;
    }
}

void popsim_config_free(popsim_config* config) { delete config; }

popsim_status popsim_config_set(popsim_config* config, const char* key, const char* value) {
    if (!config) return missing("config");
    if (!key || !value) return missing("key or value");
    return guarded([&] {
        config->settings.set(key, value);
        return POPSIM_OK;
    });
}

popsim_status popsim_config_load(popsim_config* config, const char* path) {
    if (!config) return missing("config");
    if (!path) return missing("path");
    return guarded([&] {
        config->settings.load_file(path);
        return POPSIM_OK;
    });
}

popsim_status popsim_run(const popsim_config* config) {
    if (!config) return missing("config");
    return guarded([&] { return finish(popsim::cmd_run(popsim::resolve(config->settings))); });
}

popsim_status popsim_sweep(const popsim_config* config, const char* axis, const char* values) {
    if (!config) return missing("config");
    if (!axis || !values) return missing("axis or values");
    return guarded([&] {
        popsim::Settings settings = config->settings;
        settings.set("axis", axis);
        settings.set("values", values);
        return finish(popsim::cmd_sweep(popsim::resolve(settings)));
    });
}

popsim_status popsim_experiment(const popsim_config* config, const char* name) {
    if (!config) return missing("config");
    if (!name) return missing("name");
    return guarded([&] { return finish(popsim::cmd_experiment(popsim::resolve(config->settings), name)); });
}

popsim_status popsim_sim_create(const popsim_config* config, popsim_sim** out) {
    if (!config) return missing("config");
    if (!out) return missing("out");
    *out = nullptr;
    return guarded([&] {
        const auto spec = popsim::resolve(config->settings);
        const auto n = spec.population(1000);
        const auto params = popsim::majority_params(spec, n);
        popsim::MajorityProtocol proto(params);
        std::vector<popsim::Symbol> inputs;
        try {
            inputs = popsim::inputs_for_gap(n, spec.gap);
        } catch (const std::invalid_argument& e) {
            throw popsim::ConfigError(e.what());
        }
        auto pop = popsim::new_population(proto, std::span<const popsim::Symbol>(inputs), spec.seed);
        *out = new popsim_sim{std::move(proto), std::move(pop)};
        return POPSIM_OK;
    });
}

void popsim_sim_free(popsim_sim* sim) { delete sim; }

popsim_status popsim_sim_step(popsim_sim* sim, uint64_t count) {
    if (!sim) return missing("sim");
    return guarded([&] {
        for (uint64_t i = 0; i < count; ++i) popsim::step(sim->pop, sim->proto);
        return POPSIM_OK;
    });
}

popsim_status popsim_sim_run(popsim_sim* sim, double max_parallel_time, int* silent) {
    if (!sim) return missing("sim");
    return guarded([&] {
        if (!(max_parallel_time >= 0)) throw std::invalid_argument("max_parallel_time must be nonnegative");
        const double remaining = max_parallel_time - sim->pop.parallel_time();
        if (remaining <= 0) {
            if (silent) *silent = popsim::is_silent(sim->pop, sim->proto) ? 1 : 0;
            return POPSIM_OK;
        }
        const auto guard = popsim::guard_for_time(remaining, sim->pop.size());
        auto result = popsim::run_until(std::move(sim->pop), sim->proto, popsim::Silent{}, guard);
        sim->pop = std::move(result.population);
        if (silent) *silent = result.silent ? 1 : 0;
        return POPSIM_OK;
    });
}

uint64_t popsim_sim_interactions(const popsim_sim* sim) { return sim ? sim->pop.interactions() : 0; }

double popsim_sim_parallel_time(const popsim_sim* sim) { return sim ? sim->pop.parallel_time() : 0.0; }

int popsim_sim_is_silent(const popsim_sim* sim) {
    if (!sim) return 0;
    try {
        return popsim::is_silent(sim->pop, sim->proto) ? 1 : 0;
    } catch (...) {
        return 0;
    }
}

popsim_status popsim_sim_output_counts(const popsim_sim* sim, uint64_t* a, uint64_t* b, uint64_t* t) {
    if (!sim) return missing("sim");
    if (!a || !b || !t) return missing("count pointer");
    *a = *b = *t = 0;
    for (const auto& s : sim->pop.agents()) {
        switch (s.output) {
        case popsim::Symbol::A: ++*a; break;
        case popsim::Symbol::B: ++*b; break;
        case popsim::Symbol::T: ++*t; break;
        }
    }
    return POPSIM_OK;
}

}  // extern "C"
