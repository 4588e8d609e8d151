#ifndef POPSIM_H
#define POPSIM_H

/* C interface to the popsim library. Handles are opaque; every call that can
 * fail returns a popsim_status and leaves a message in popsim_last_error(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define POPSIM_API __declspec(dllexport)
#else
#define POPSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum popsim_status {
    POPSIM_OK = 0,
    POPSIM_ERR_CONFIG = 1,      /* invalid settings */
    POPSIM_ERR_CORRECTNESS = 2, /* a run ended silent with the wrong output, or an experiment failed */
    POPSIM_ERR_GUARD = 3,       /* interaction guard exhausted before silence */
    POPSIM_ERR_INVALID_ARGUMENT = 4,
    POPSIM_ERR_IO = 5,
    POPSIM_ERR_INTERNAL = 6
} popsim_status;

typedef struct popsim_config popsim_config;
typedef struct popsim_sim popsim_sim;

POPSIM_API const char* popsim_version(void);
/* Message for the last failing call on this thread ("" if none). */
POPSIM_API const char* popsim_last_error(void);
/* Output directory and one-line summary of the last command on this thread. */
POPSIM_API const char* popsim_last_output_dir(void);
POPSIM_API const char* popsim_last_summary(void);

/* ---- configuration ---- */

POPSIM_API popsim_config* popsim_config_new(void);
POPSIM_API void popsim_config_free(popsim_config* config);
/* Keys match the long CLI flags without dashes: n, gap, seed, p, k, L, ... */
POPSIM_API popsim_status popsim_config_set(popsim_config* config, const char* key, const char* value);
/* Loads key = value lines. Values set with popsim_config_set take precedence. */
POPSIM_API popsim_status popsim_config_load(popsim_config* config, const char* path);

/* ---- commands (write files under the configured output directory) ---- */

POPSIM_API popsim_status popsim_run(const popsim_config* config);
/* axis is "n" or "gap"; values is a comma-separated list. */
POPSIM_API popsim_status popsim_sweep(const popsim_config* config, const char* axis, const char* values);
/* name is one of epidemic, cancel, one-sided, minutes. */
POPSIM_API popsim_status popsim_experiment(const popsim_config* config, const char* name);

/* ---- step-level majority simulation ---- */

/* Builds a majority population from the config's n, gap, seed and protocol parameters. */
POPSIM_API popsim_status popsim_sim_create(const popsim_config* config, popsim_sim** out);
POPSIM_API void popsim_sim_free(popsim_sim* sim);
POPSIM_API popsim_status popsim_sim_step(popsim_sim* sim, uint64_t count);
/* Runs until silent or max_parallel_time; *silent reports which. */
POPSIM_API popsim_status popsim_sim_run(popsim_sim* sim, double max_parallel_time, int* silent);
POPSIM_API uint64_t popsim_sim_interactions(const popsim_sim* sim);
POPSIM_API double popsim_sim_parallel_time(const popsim_sim* sim);
POPSIM_API int popsim_sim_is_silent(const popsim_sim* sim);
/* Counts of agents currently outputting A, B and T. */
POPSIM_API popsim_status popsim_sim_output_counts(const popsim_sim* sim, uint64_t* a, uint64_t* b, uint64_t* t);

#ifdef __cplusplus
}
#endif

#endif
