#include "popsim/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "popsim/clock.hpp"
#include "popsim/metrics.hpp"
#include "popsim/size_estimation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace popsim {

// ---------------------------------------------------------------------------
// Settings

const std::vector<std::string>& Settings::known_keys() {
    static const std::vector<std::string> keys{
        "protocol", "n", "gap", "seed", "trials", "p", "k", "L", "counter-mult", "preset",
        "stop", "snapshot-dt", "project", "mark", "out", "label", "jobs", "guard", "tolerance",
        "a", "b", "d", "b1", "b2", "first-minute", "last-minute", "axis", "values"};
    return keys;
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

void check_key(const std::string& key) {
    const auto& keys = Settings::known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown setting '" + key + "'");
}

}  // namespace

void Settings::set(const std::string& key, const std::string& value) {
    check_key(key);
    explicit_[key] = value;
}

void Settings::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(number) + ": expected key = value");
        std::string key = trim(body.substr(0, eq));
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        check_key(key);
        file_[key] = trim(body.substr(eq + 1));
    }
}

std::optional<std::string> Settings::get(const std::string& key) const {
    if (auto it = explicit_.find(key); it != explicit_.end()) return it->second;
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::int64_t parse_int(const std::string& key, const std::string& text) {
    std::int64_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec == std::errc() && ptr == end) return value;
    // Also accept exact scientific forms such as 1e6.
    char* stop = nullptr;
    const double d = std::strtod(text.c_str(), &stop);
    if (!text.empty() && *stop == '\0' && std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e18)
        return static_cast<std::int64_t>(d);
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
}

double parse_double(const std::string& key, const std::string& text) {
    char* stop = nullptr;
    const double d = std::strtod(text.c_str(), &stop);
    if (text.empty() || *stop != '\0' || !std::isfinite(d))
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    return d;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int small_int(const std::string& key, const std::string& text, std::int64_t lo, std::int64_t hi) {
    const auto v = parse_int(key, text);
    if (v < lo || v > hi) throw ConfigError(key + " out of range");
    return static_cast<int>(v);
}

}  // namespace

RunSpec resolve(const Settings& settings) {
    RunSpec spec;
    const auto get = [&](const char* key) { return settings.get(key); };

    if (auto v = get("protocol")) spec.protocol = *v;
    static const std::vector<std::string> protocols{"majority", "backup", "clock", "sizeest", "epidemic"};
    if (std::find(protocols.begin(), protocols.end(), spec.protocol) == protocols.end())
        throw ConfigError("unknown protocol '" + spec.protocol + "'");

    if (auto v = get("n")) {
        const auto n = parse_int("n", *v);
        if (n < 2) throw ConfigError("population too small");
        spec.n = static_cast<std::uint64_t>(n);
    }
    if (auto v = get("gap")) spec.gap = parse_int("gap", *v);
    if (auto v = get("preset")) spec.preset = *v;
    if (spec.preset != "paper-sim" && spec.preset != "paper-proof")
        throw ConfigError("unknown preset '" + spec.preset + "'");
    if (auto v = get("p")) {
        spec.p = parse_double("p", *v);
        if (!(*spec.p > 0 && *spec.p <= 1)) throw ConfigError("p must be in (0, 1]");
    }
    if (auto v = get("k")) spec.k = small_int("k", *v, 1, 65535);
    if (auto v = get("L")) spec.depth = small_int("L", *v, 1, 60);
    if (auto v = get("counter-mult")) {
        std::vector<double> mult;
        for (const auto& item : split_list(*v)) mult.push_back(parse_double("counter-mult", item));
        if (mult.size() != 1 && mult.size() != 9)
            throw ConfigError("counter-mult takes one value or nine (c0..c8)");
        for (double c : mult)
            if (!(c > 0)) throw ConfigError("counter multipliers must be positive");
        spec.counter_mult = mult;
    }

    if (auto v = get("seed")) {
        spec.seed = static_cast<std::uint64_t>(parse_int("seed", *v));
    } else if (const char* env = std::getenv("POPSIM_SEED"); env && *env) {
        spec.seed = static_cast<std::uint64_t>(parse_int("POPSIM_SEED", env));
    }
    if (auto v = get("trials")) spec.trials = small_int("trials", *v, 1, 1000000);
    if (auto v = get("stop")) {
        if (*v == "silent") {
            spec.stop_time.reset();
        } else if (v->rfind("time=", 0) == 0) {
            spec.stop_time = parse_double("stop", v->substr(5));
            if (!(*spec.stop_time >= 0)) throw ConfigError("stop time must be nonnegative");
        } else {
            throw ConfigError("stop must be 'silent' or 'time=T'");
        }
    }
    if (auto v = get("snapshot-dt")) {
        spec.snapshot_dt = parse_double("snapshot-dt", *v);
        if (!(spec.snapshot_dt > 0)) throw ConfigError("snapshot-dt must be positive");
    }
    if (auto v = get("project")) spec.project = split_list(*v);
    if (auto v = get("mark"))
        for (const auto& item : split_list(*v)) spec.marks.push_back(parse_double("mark", item));
    if (auto v = get("out")) spec.out = *v;
    if (auto v = get("label")) {
        spec.label = *v;
        if (spec.label.find('/') != std::string::npos || spec.label == ".." || spec.label == ".")
            throw ConfigError("label must be a plain name");
    }
    if (auto v = get("jobs")) spec.jobs = small_int("jobs", *v, 1, 1024);
    if (auto v = get("guard")) {
        spec.guard = parse_double("guard", *v);
        if (!(*spec.guard > 0)) throw ConfigError("guard must be positive");
    }
    if (auto v = get("tolerance")) {
        spec.tolerance = parse_double("tolerance", *v);
        if (!(*spec.tolerance > 0)) throw ConfigError("tolerance must be positive");
    }
    for (const char* key : {"a", "b", "d", "b1", "b2", "first-minute", "last-minute"})
        if (auto v = get(key)) spec.experiment[key] = parse_double(key, *v);
    if (auto v = get("axis")) spec.axis = *v;
    if (auto v = get("values")) spec.values = split_list(*v);
    return spec;
}

MajorityParams majority_params(const RunSpec& spec, std::uint64_t n) {
    try {
        auto params = MajorityParams::preset(spec.preset, n);
        if (spec.k) params.minutes_per_hour = *spec.k;
        if (spec.p) params.drip_probability = *spec.p;
        if (spec.depth) params.depth = *spec.depth;
        if (spec.counter_mult) {
            if (spec.counter_mult->size() == 1) params.counter_mult.fill(spec.counter_mult->front());
            else std::copy(spec.counter_mult->begin(), spec.counter_mult->end(), params.counter_mult.begin());
        }
        params.validate();
        return params;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

double guard_time(const RunSpec& spec, std::uint64_t n) {
    if (spec.guard) return *spec.guard;
    const double size = static_cast<double>(n);
    return std::max(1e5, 20.0 * size * std::log2(size));
}

std::vector<std::string> default_projection(const std::string& protocol) {
    if (protocol == "majority") return {"phase", "role", "opinion", "exponent", "output"};
    if (protocol == "backup") return {"output", "active"};
    if (protocol == "clock") return {"minute"};
    if (protocol == "sizeest") return {"kind", "level"};
    return {"infected"};
}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"epidemic", "cancel", "one-sided", "minutes"};
    return names;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fs::filesystem_error("cannot write", path, std::make_error_code(std::errc::io_error));
    return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

void write_timeline(const fs::path& path, const Timeline& timeline) {
    auto out = open_out(path);
    out << "parallel_time,key,count\n";
    for (const auto& snap : timeline.snapshots)
        for (const auto& [key, count] : snap.counts)
            out << num(snap.parallel_time) << ',' << csv_field(key) << ',' << count << '\n';
}

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm parts{};
    gmtime_r(&now, &parts);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &parts);
    return buf;
}

fs::path output_dir(const RunSpec& spec, const std::string& group) {
    fs::path dir = fs::path(spec.out) / group / (spec.label.empty() ? timestamp() : spec.label);
    fs::create_directories(dir);
    return dir;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json meta_json(const RunSpec& spec, std::uint64_t n, const std::string& command) {
    json j;
    j["command"] = command;
    j["protocol"] = spec.protocol;
    j["n"] = n;
    j["seed"] = spec.seed;
    j["trials"] = spec.trials.value_or(1);
    j["jobs"] = spec.jobs;
    j["stop"] = spec.stop_time ? "time=" + num(*spec.stop_time) : "silent";
    j["snapshot_dt"] = spec.snapshot_dt;
    j["guard"] = guard_time(spec, n);
    j["marks"] = spec.marks;
    if (spec.protocol == "majority" || spec.protocol == "backup") j["gap"] = spec.gap;
    if (spec.protocol == "majority") {
        const auto params = majority_params(spec, n);
        j["preset"] = spec.preset;
        j["k"] = params.minutes_per_hour;
        j["p"] = params.drip_probability;
        j["L"] = params.depth;
        j["counter_mult"] = params.counter_mult;
        json counters = json::array();
        for (int phase = 0; phase < 9; ++phase) counters.push_back(params.counter_start(phase));
        j["counter_start"] = counters;
    }
    if (!spec.experiment.empty()) j["experiment_params"] = spec.experiment;
    if (!spec.axis.empty()) {
        j["axis"] = spec.axis;
        j["values"] = spec.values;
    }
    return j;
}

Outcome worse(Outcome a, Outcome b) {
    const auto rank = [](Outcome o) {
        switch (o) {
        case Outcome::Correctness: return 3;
        case Outcome::Guard: return 2;
        case Outcome::Config: return 1;
        case Outcome::Ok: return 0;
        }
        return 0;
    };
    return rank(a) >= rank(b) ? a : b;
}

void check_gap(std::uint64_t n, std::int64_t gap) {
    const auto magnitude = static_cast<std::uint64_t>(gap < 0 ? -gap : gap);
    if (magnitude > n) throw ConfigError("|gap| must not exceed n");
    if ((n + magnitude) % 2 != 0) throw ConfigError("n + gap must be even (n=" + std::to_string(n) + ", gap=" + std::to_string(gap) + ")");
}

template <class State>
std::vector<std::string> projection(const RunSpec& spec) {
    auto fields = spec.project.empty() ? default_projection(spec.protocol) : spec.project;
    try {
        check_fields<State>(fields);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return fields;
}

fs::path trial_dir(const fs::path& dir, int trials, int i) {
    if (trials == 1) return dir;
    char name[32];
    std::snprintf(name, sizeof name, "trial-%03d", i);
    fs::create_directories(dir / name);
    return dir / name;
}

// Outcome of one silent-or-timed run.
Outcome judge(bool timed, bool silent, bool correct) {
    if (timed) return Outcome::Ok;
    if (!silent) return Outcome::Guard;
    return correct ? Outcome::Ok : Outcome::Correctness;
}

json output_json(const std::optional<Symbol>& s) { return s ? json(to_string(*s)) : json(nullptr); }

// ---------------------------------------------------------------------------
// run

CommandResult run_majority_cmd(const RunSpec& spec) {
    const auto n = spec.population(1000);
    check_gap(n, spec.gap);
    const auto params = majority_params(spec, n);
    const auto fields = projection<AgentState>(spec);
    const int trials = spec.trials.value_or(1);
    const auto dir = output_dir(spec, spec.protocol);
    write_json(dir / "meta.json", meta_json(spec, n, "run"));

    auto reports = run_trials<MajorityRunReport>(trials, spec.jobs, [&](int i) {
        MajorityRunConfig config;
        config.params = params;
        config.gap = spec.gap;
        config.seed = trial_seed(spec.seed, static_cast<std::uint64_t>(i));
        config.stop_time = spec.stop_time;
        config.guard_time = guard_time(spec, n);
        config.fields = fields;
        config.snapshot_dt = spec.snapshot_dt;
        config.marks = spec.marks;
        return run_majority(config);
    });

    CommandResult result;
    result.directory = dir.string();
    int correct = 0;
    for (int i = 0; i < trials; ++i) {
        const auto& r = reports[static_cast<std::size_t>(i)];
        const auto tdir = trial_dir(dir, trials, i);
        json j;
        j["output"] = output_json(r.output);
        j["expected"] = to_string(r.expected);
        j["correct"] = r.correct;
        j["stabilization_time"] = optional_json(r.stabilization_time);
        j["silent"] = r.silent;
        j["interactions"] = r.interactions;
        j["parallel_time"] = r.parallel_time;
        j["stopped_by"] = to_string(r.stopped_by);
        j["seed"] = r.seed;
        j["max_phase"] = r.max_phase;
        j["stabilization_phase"] = r.stabilization_phase;
        json entries = json::array();
        for (const auto& e : r.phase_entry) entries.push_back(optional_json(e));
        j["phase_entry"] = entries;
        write_json(tdir / "result.json", j);
        if (r.timeline) write_timeline(tdir / "timeline.csv", *r.timeline);
        correct += r.correct;
        result.outcome = worse(result.outcome, judge(spec.stop_time.has_value(), r.silent, r.correct));
    }
    result.summary = std::to_string(correct) + "/" + std::to_string(trials) + " correct";
    if (trials == 1) {
        const auto& r = reports.front();
        result.summary = std::string("output ") + (r.output ? to_string(*r.output) : "mixed") + ", expected " +
                         to_string(r.expected) + ", " + (r.silent ? "silent" : "not silent") + " at t=" +
                         num(r.parallel_time);
    }
    return result;
}

CommandResult run_backup_cmd(const RunSpec& spec) {
    const auto n = spec.population(1000);
    check_gap(n, spec.gap);
    const auto fields = projection<BackupState>(spec);
    const int trials = spec.trials.value_or(1);
    const auto dir = output_dir(spec, spec.protocol);
    write_json(dir / "meta.json", meta_json(spec, n, "run"));
    const auto inputs = inputs_for_gap(n, spec.gap);
    auto reports = run_trials<BackupRunReport>(trials, spec.jobs, [&](int i) {
        return run_backup(inputs, trial_seed(spec.seed, static_cast<std::uint64_t>(i)), guard_time(spec, n),
                          spec.stop_time, fields, spec.snapshot_dt, spec.marks);
    });
    CommandResult result;
    result.directory = dir.string();
    int correct = 0;
    for (int i = 0; i < trials; ++i) {
        const auto& r = reports[static_cast<std::size_t>(i)];
        const auto tdir = trial_dir(dir, trials, i);
        json j;
        j["output"] = output_json(r.output);
        j["expected"] = to_string(r.expected);
        j["correct"] = r.correct;
        j["stabilization_time"] = optional_json(r.stabilization_time);
        j["silent"] = r.silent;
        j["interactions"] = r.interactions;
        j["parallel_time"] = r.parallel_time;
        j["stopped_by"] = to_string(r.stopped_by);
        j["seed"] = trial_seed(spec.seed, static_cast<std::uint64_t>(i));
        write_json(tdir / "result.json", j);
        if (r.timeline) write_timeline(tdir / "timeline.csv", *r.timeline);
        correct += r.correct;
        result.outcome = worse(result.outcome, judge(spec.stop_time.has_value(), r.silent, r.correct));
    }
    result.summary = std::to_string(correct) + "/" + std::to_string(trials) + " correct";
    return result;
}

CommandResult run_clock_cmd(const RunSpec& spec) {
    const auto n = spec.population(1000);
    auto preset = MajorityParams::preset(spec.preset, n);
    MinuteRunConfig config;
    config.n = n;
    config.p = spec.p.value_or(preset.drip_probability);
    config.minutes_per_hour = spec.k.value_or(preset.minutes_per_hour);
    config.depth = spec.depth.value_or(preset.depth);
    config.first_minute = 0;
    config.last_minute = config.minutes_per_hour * config.depth - 1;
    config.seed = spec.seed;
    config.snapshot_dt = spec.snapshot_dt;
    config.stop_time = spec.stop_time;
    config.guard_time = guard_time(spec, n);
    if (config.last_minute < 0) throw ConfigError("k*L must be at least 1");

    const auto dir = output_dir(spec, spec.protocol);
    json meta = meta_json(spec, n, "run");
    meta["p"] = config.p;
    meta["k"] = config.minutes_per_hour;
    meta["L"] = config.depth;
    write_json(dir / "meta.json", meta);

    const auto stats = measure_minutes(config);
    {
        auto out = open_out(dir / "minutes.csv");
        out << "parallel_time,minute,fraction\n";
        for (std::size_t s = 0; s < stats.times.size(); ++s) {
            const auto& tail = stats.tails[s];
            for (std::size_t i = 0; i + 1 < tail.size(); ++i) {
                const double exact = tail[i] - tail[i + 1];
                if (exact > 0) out << num(stats.times[s]) << ',' << i << ',' << num(exact) << '\n';
            }
        }
    }
    {
        auto out = open_out(dir / "crossings.csv");
        out << "minute,t_plus,t_01,t_09\n";
        const auto cell = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
        for (std::size_t i = 0; i + 1 < stats.t_plus.size(); ++i)
            out << i << ',' << cell(stats.t_plus[i]) << ',' << cell(stats.t_01[i]) << ',' << cell(stats.t_09[i]) << '\n';
    }
    json j;
    j["complete"] = stats.complete;
    j["end_time"] = stats.end_time;
    j["minute_lengths"] = stats.minute_lengths;
    j["mean_minute_length"] = stats.minute_lengths.empty() ? json(nullptr) : json(mean_of(stats.minute_lengths));
    const auto [lo, hi] = minute_length_bounds(config.p);
    j["bounds"] = {lo, hi};
    json hours = json::array();
    for (const auto& h : hour_projection(stats))
        hours.push_back({{"hour", h.hour}, {"start", optional_json(h.start)}, {"end", optional_json(h.end)}});
    j["hours"] = hours;
    write_json(dir / "result.json", j);

    CommandResult result;
    result.directory = dir.string();
    result.outcome = (!spec.stop_time && !stats.complete) ? Outcome::Guard : Outcome::Ok;
    result.summary = std::to_string(stats.minute_lengths.size()) + " minute lengths, end t=" + num(stats.end_time);
    return result;
}

CommandResult run_sizeest_cmd(const RunSpec& spec) {
    const auto n = spec.population(64);
    const int trials = spec.trials.value_or(1);
    const auto dir = output_dir(spec, spec.protocol);
    write_json(dir / "meta.json", meta_json(spec, n, "run"));
    auto reports = run_trials<SizeEstReport>(trials, spec.jobs, [&](int i) {
        return run_size_estimation(n, trial_seed(spec.seed, static_cast<std::uint64_t>(i)), guard_time(spec, n));
    });
    CommandResult result;
    result.directory = dir.string();
    int ok = 0;
    for (int i = 0; i < trials; ++i) {
        const auto& r = reports[static_cast<std::size_t>(i)];
        json j;
        j["n"] = r.n;
        j["l_levels"] = r.l_levels;
        j["f_value"] = r.f_value ? json(*r.f_value) : json(nullptr);
        j["silence_time"] = optional_json(r.silence_time);
        j["interactions"] = r.interactions;
        j["ok"] = r.ok;
        j["problems"] = r.problems;
        write_json(trial_dir(dir, trials, i) / "report.json", j);
        ok += r.ok;
        result.outcome = worse(result.outcome, judge(false, r.silence_time.has_value(), r.ok));
    }
    result.summary = std::to_string(ok) + "/" + std::to_string(trials) + " reports match the binary expansion of n";
    return result;
}

// Stops once every agent is infected.
struct InfectionWatch {
    TimelineRecorder<EpidemicState>& recorder;
    std::uint64_t remaining;
    void on_check(const Population<EpidemicState>& pop) { recorder.on_check(pop); }
    void on_step(const Population<EpidemicState>& pop, const InteractionRecord& rec) {
        remaining -= rec.changed;
        recorder.on_step(pop, rec);
    }
    bool stop_requested() const { return remaining == 0; }
};

CommandResult run_epidemic_cmd(const RunSpec& spec) {
    const auto n = spec.population(1000);
    const auto fields = projection<EpidemicState>(spec);
    const double a = spec.experiment.count("a") ? spec.experiment.at("a") : 0.0;
    if (a < 0 || a >= 1) throw ConfigError("a must be in [0, 1)");
    const auto start = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(a * static_cast<double>(n))));
    const auto dir = output_dir(spec, spec.protocol);
    write_json(dir / "meta.json", meta_json(spec, n, "run"));

    std::vector<EpidemicState> agents(n);
    for (std::uint64_t i = 0; i < start; ++i) agents[i].infected = true;
    Population<EpidemicState> pop(std::move(agents), spec.seed);
    TimelineRecorder<EpidemicState> recorder(fields, spec.snapshot_dt, n);
    recorder.set_marks(spec.marks);
    const double guard = guard_time(spec, n);
    StopCondition<EpidemicState> stop = MaxParallelTime{spec.stop_time.value_or(guard)};
    RunOptions options;
    options.check_interval = 1e9;
    auto run = run_until(std::move(pop), EpidemicProtocol{}, stop, guard_for_time(guard, n), options,
                         InfectionWatch{recorder, n - start});
    recorder.finish(run.population);
    write_timeline(dir / "timeline.csv", recorder.timeline());
    const bool done = run.stopped_by == StopKind::Observer || n == start;
    json j;
    j["silent"] = done;
    j["completion_time"] = done ? json(run.parallel_time) : json(nullptr);
    j["interactions"] = run.interactions;
    j["parallel_time"] = run.parallel_time;
    j["initially_infected"] = start;
    write_json(dir / "result.json", j);

    CommandResult result;
    result.directory = dir.string();
    result.outcome = judge(spec.stop_time.has_value(), done, true);
    result.summary = done ? "all infected at t=" + num(run.parallel_time) : "stopped at t=" + num(run.parallel_time);
    return result;
}

}  // namespace

CommandResult cmd_run(const RunSpec& spec) {
    if (spec.protocol == "majority") return run_majority_cmd(spec);
    if (spec.protocol == "backup") return run_backup_cmd(spec);
    if (spec.protocol == "clock") return run_clock_cmd(spec);
    if (spec.protocol == "sizeest") return run_sizeest_cmd(spec);
    if (spec.protocol == "epidemic") return run_epidemic_cmd(spec);
    throw ConfigError("unknown protocol '" + spec.protocol + "'");
}

// ---------------------------------------------------------------------------
// sweep

CommandResult cmd_sweep(const RunSpec& spec) {
    if (spec.protocol != "majority" && spec.protocol != "backup")
        throw ConfigError("sweeps support the majority and backup protocols");
    if (spec.axis != "n" && spec.axis != "gap") throw ConfigError("axis must be 'n' or 'gap'");
    if (spec.values.empty()) throw ConfigError("sweep needs at least one value");

    struct Point {
        std::uint64_t n;
        std::int64_t gap;
        std::string label;
    };
    std::vector<Point> points;
    for (const auto& text : spec.values) {
        Point pt{spec.population(1000), spec.gap, text};
        if (spec.axis == "n") {
            const auto v = parse_int("values", text);
            if (v < 2) throw ConfigError("population too small");
            pt.n = static_cast<std::uint64_t>(v);
        } else {
            pt.gap = parse_int("values", text);
        }
        check_gap(pt.n, pt.gap);
        if (spec.protocol == "majority") majority_params(spec, pt.n);
        points.push_back(pt);
    }
    const int trials = spec.trials.value_or(20);
    const auto dir = output_dir(spec, "sweep-" + spec.protocol);
    write_json(dir / "meta.json", meta_json(spec, spec.population(1000), "sweep"));

    struct TrialOutcome {
        bool silent = false;
        bool correct = false;
        std::optional<double> time;
    };
    CommandResult result;
    result.directory = dir.string();
    auto out = open_out(dir / "summary.csv");
    out << "axis_value,trials,correct_rate,mean_time,p90_time\n";
    std::ostringstream summary;
    for (const auto& pt : points) {
        auto outcomes = run_trials<TrialOutcome>(trials, spec.jobs, [&](int i) {
            const auto seed = trial_seed(spec.seed, static_cast<std::uint64_t>(i));
            if (spec.protocol == "majority") {
                MajorityRunConfig config;
                config.params = majority_params(spec, pt.n);
                config.gap = pt.gap;
                config.seed = seed;
                config.guard_time = guard_time(spec, pt.n);
                const auto r = run_majority(config);
                return TrialOutcome{r.silent, r.correct, r.stabilization_time};
            }
            const auto inputs = inputs_for_gap(pt.n, pt.gap);
            const auto r = run_backup(inputs, seed, guard_time(spec, pt.n));
            return TrialOutcome{r.silent, r.correct, r.stabilization_time};
        });
        int correct = 0;
        std::vector<double> times;
        for (const auto& o : outcomes) {
            correct += o.correct;
            if (o.time) times.push_back(*o.time);
            result.outcome = worse(result.outcome, judge(false, o.silent, o.correct));
        }
        const double rate = static_cast<double>(correct) / trials;
        out << csv_field(pt.label) << ',' << trials << ',' << num(rate) << ','
            << (times.empty() ? "" : num(mean_of(times))) << ',' << (times.empty() ? "" : num(quantile(times, 0.9)))
            << '\n';
        summary << spec.axis << '=' << pt.label << ": " << correct << '/' << trials << " correct\n";
    }
    result.summary = summary.str();
    if (!result.summary.empty()) result.summary.pop_back();
    return result;
}

// ---------------------------------------------------------------------------
// experiment

CommandResult cmd_experiment(const RunSpec& spec, const std::string& name) {
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw ConfigError("unknown experiment '" + name + "'");
    ExperimentConfig config;
    config.n = spec.population(1000000);
    config.trials = spec.trials.value_or(name == "minutes" ? 10 : 20);
    config.seed = spec.seed;
    config.jobs = spec.jobs;
    config.tolerance = spec.tolerance.value_or(name == "minutes" ? 0.15 : 0.05);
    const auto param = [&](const char* key, double fallback) {
        auto it = spec.experiment.find(key);
        return it == spec.experiment.end() ? fallback : it->second;
    };

    ExperimentResult r;
    try {
        if (name == "epidemic") {
            r = epidemic_experiment(config, param("a", 0.1), param("b", 0.9));
        } else if (name == "cancel") {
            r = cancel_experiment(config, param("a", 0.1125), param("b", 0.0843), param("d", 0.05));
        } else if (name == "one-sided") {
            r = one_sided_cancel_experiment(config, param("a", 0.5), param("b1", 0.5), param("b2", 0.05));
        } else {
            r = minutes_experiment(config, spec.p.value_or(1.0), spec.k.value_or(45), spec.depth.value_or(10),
                                   static_cast<int>(param("first-minute", 9)),
                                   static_cast<int>(param("last-minute", 18)));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    RunSpec described = spec;
    described.protocol = "experiment";
    const auto dir = output_dir(spec, "experiment-" + name);
    write_json(dir / "meta.json", meta_json(described, config.n, "experiment " + name));
    json j;
    j["name"] = r.name;
    j["params"] = r.params;
    j["samples"] = r.samples;
    j["prediction"] = r.prediction;
    j["tolerance"] = r.tolerance;
    j["pass"] = r.pass;
    for (auto it = r.extra.begin(); it != r.extra.end(); ++it) j[it.key()] = it.value();
    write_json(dir / "experiment.json", j);

    CommandResult result;
    result.directory = dir.string();
    result.outcome = r.pass ? Outcome::Ok : Outcome::Correctness;
    result.summary = name + ": mean " + num(r.mean()) + ", prediction " + num(r.prediction) +
                     (r.pass ? ", pass" : ", FAIL");
    return result;
}

}  // namespace popsim
