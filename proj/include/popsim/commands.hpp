#pragma once

// Run / sweep / experiment commands shared by the C API and the CLI.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popsim/majority.hpp"

namespace popsim {

/// Bad user configuration (exit code 1).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Outcome : int { Ok = 0, Config = 1, Correctness = 2, Guard = 3 };

/// Key-value settings in two layers: explicit values beat config-file values.
class Settings {
public:
    static const std::vector<std::string>& known_keys();

    void set(const std::string& key, const std::string& value);
    /// Reads `key = value` lines; '#' starts a comment.
    void load_file(const std::string& path);
    std::optional<std::string> get(const std::string& key) const;

private:
    std::map<std::string, std::string> explicit_;
    std::map<std::string, std::string> file_;
};

struct RunSpec {
    std::string protocol = "majority";  // majority, backup, clock, sizeest, epidemic
    std::optional<std::uint64_t> n;
    std::int64_t gap = 0;
    std::string preset = "paper-sim";
    std::optional<int> k, depth;
    std::optional<double> p;
    std::optional<std::vector<double>> counter_mult;
    std::uint64_t seed = 1;
    std::optional<int> trials;
    std::optional<double> stop_time;  // absent: run to silence
    double snapshot_dt = 0.25;
    std::vector<std::string> project;  // empty: protocol default
    std::vector<double> marks;         // extra snapshot times
    std::string out = "runs";
    std::string label;  // empty: timestamp
    int jobs = 1;
    std::optional<double> guard;  // parallel time
    std::optional<double> tolerance;
    std::map<std::string, double> experiment;  // a, b, d, b1, b2, first-minute, last-minute
    std::string axis;
    std::vector<std::string> values;

    std::uint64_t population(std::uint64_t fallback) const { return n.value_or(fallback); }
};

/// Applies preset defaults and validates. Throws ConfigError.
RunSpec resolve(const Settings& settings);

MajorityParams majority_params(const RunSpec& spec, std::uint64_t n);
double guard_time(const RunSpec& spec, std::uint64_t n);
std::vector<std::string> default_projection(const std::string& protocol);

struct CommandResult {
    Outcome outcome = Outcome::Ok;
    std::string directory;
    std::string summary;
};

CommandResult cmd_run(const RunSpec& spec);
/// axis is "n" or "gap"; values come from spec.values.
CommandResult cmd_sweep(const RunSpec& spec);
CommandResult cmd_experiment(const RunSpec& spec, const std::string& name);

const std::vector<std::string>& experiment_names();

}  // namespace popsim
