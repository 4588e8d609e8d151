#include "popsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace popsim {

// ---------------------------------------------------------------------------
// Fields

const std::vector<std::string>& known_fields(const AgentState*) {
    static const std::vector<std::string> fields{
        "phase", "role", "input", "output", "assigned", "bias", "opinion", "exponent",
        "hour", "minute", "counter", "sample", "full", "opinions", "active"};
    return fields;
}
const std::vector<std::string>& known_fields(const BackupState*) {
    static const std::vector<std::string> fields{"input", "output", "active"};
    return fields;
}
const std::vector<std::string>& known_fields(const ClockState*) {
    static const std::vector<std::string> fields{"minute"};
    return fields;
}
const std::vector<std::string>& known_fields(const SizeEstState*) {
    static const std::vector<std::string> fields{"kind", "level"};
    return fields;
}
const std::vector<std::string>& known_fields(const EpidemicState*) {
    static const std::vector<std::string> fields{"infected"};
    return fields;
}

namespace {

std::string opinion_set(std::uint8_t bits) {
    std::string out = "{";
    bool first = true;
    for (int o = -1; o <= 1; ++o) {
        if (!(bits & opinion_bit(o))) continue;
        if (!first) out += ',';
        out += std::to_string(o);
        first = false;
    }
    return out + "}";
}

[[noreturn]] void unknown(std::string_view field) {
    throw std::invalid_argument("unknown field '" + std::string(field) + "'");
}

}  // namespace

std::string field_value(const AgentState& s, std::string_view f) {
    if (f == "phase") return std::to_string(s.phase);
    if (f == "role") return to_string(s.role);
    if (f == "input") return to_string(s.input);
    if (f == "output") return to_string(s.output);
    if (f == "assigned") return s.assigned ? "1" : "0";
    if (f == "bias") return std::to_string(s.bias);
    if (f == "opinion") return std::to_string(s.opinion);
    if (f == "exponent") return std::to_string(s.exponent);
    if (f == "hour") return std::to_string(s.hour);
    if (f == "minute") return std::to_string(s.minute);
    if (f == "counter") return std::to_string(s.counter);
    if (f == "sample") return s.sample == kNoSample ? "none" : std::to_string(s.sample);
    if (f == "full") return s.full ? "1" : "0";
    if (f == "opinions") return opinion_set(s.opinions);
    if (f == "active") return s.active ? "1" : "0";
    unknown(f);
}

std::string field_value(const BackupState& s, std::string_view f) {
    if (f == "input") return to_string(s.input);
    if (f == "output") return to_string(s.output);
    if (f == "active") return s.active ? "1" : "0";
    unknown(f);
}

std::string field_value(const ClockState& s, std::string_view f) {
    if (f == "minute") return std::to_string(s.minute);
    unknown(f);
}

std::string field_value(const SizeEstState& s, std::string_view f) {
    if (f == "kind") return s.kind == SizeKind::L ? "L" : "F";
    if (f == "level") return std::to_string(s.level);
    unknown(f);
}

std::string field_value(const EpidemicState& s, std::string_view f) {
    if (f == "infected") return s.infected ? "1" : "0";
    unknown(f);
}

std::uint64_t Snapshot::total() const {
    std::uint64_t sum = 0;
    for (const auto& [key, count] : counts) sum += count;
    return sum;
}

std::optional<double> stabilization_time(const Timeline& timeline, const std::string& final_output,
                                         bool silent) {
    if (!silent || timeline.snapshots.empty()) return std::nullopt;
    const auto it = std::find(timeline.fields.begin(), timeline.fields.end(), "output");
    if (it == timeline.fields.end()) return std::nullopt;
    const auto column = static_cast<std::size_t>(it - timeline.fields.begin());

    const auto settled = [&](const Snapshot& snap) {
        for (const auto& [key, count] : snap.counts) {
            std::size_t start = 0;
            for (std::size_t c = 0; c < column; ++c) start = key.find('|', start) + 1;
            const auto end = key.find('|', start);
            if (key.substr(start, end == std::string::npos ? std::string::npos : end - start) != final_output)
                return false;
        }
        return true;
    };
    std::optional<double> since;
    for (auto s = timeline.snapshots.rbegin(); s != timeline.snapshots.rend(); ++s) {
        if (!settled(*s)) break;
        since = s->parallel_time;
    }
    return since;
}

// ---------------------------------------------------------------------------
// Majority runs

namespace {

struct MajorityWatch {
    const MajorityRunConfig& config;
    MajorityRunReport& report;
    MassLedger* ledger = nullptr;
    TimelineRecorder<AgentState>* recorder = nullptr;
    int entered_up_to = 0;  // phases whose entry callback already ran
    bool stop = false;

    void on_check(const Population<AgentState>& pop) {
        if (recorder) recorder->on_check(pop);
    }

    void on_interaction(const Interaction<AgentState>& rec) {
        if (ledger) ledger->apply(rec);
        if (rec.after_first.phase < rec.before_first.phase || rec.after_second.phase < rec.before_second.phase)
            report.phase_monotone = false;
        const int top = std::max(rec.after_first.phase, rec.after_second.phase);
        if (top > report.max_phase) {
            const double t = static_cast<double>(rec.record.index) / static_cast<double>(report.n);
            for (int p = report.max_phase + 1; p <= top; ++p) report.phase_entry[static_cast<std::size_t>(p)] = t;
            report.max_phase = top;
        }
        if (rec.after_first.output != rec.before_first.output ||
            rec.after_second.output != rec.before_second.output)
            report.stabilization_phase = top;
        if (recorder) recorder->on_interaction(rec);
    }

    void on_step(const Population<AgentState>& pop, const InteractionRecord& rec) {
        while (entered_up_to < report.max_phase) {
            ++entered_up_to;
            if (config.on_phase_entry) config.on_phase_entry(entered_up_to, pop);
        }
        if (config.stop_at_phase && report.max_phase >= *config.stop_at_phase) stop = true;
        if (recorder) recorder->on_step(pop, rec);
    }

    bool stop_requested() const { return stop; }
};

std::optional<Symbol> common_output(std::span<const AgentState> agents) {
    const Symbol first = agents.front().output;
    for (const auto& a : agents)
        if (a.output != first) return std::nullopt;
    return first;
}

}  // namespace

MajorityRunReport run_majority(const MajorityRunConfig& config) {
    const MajorityProtocol proto(config.params);
    const auto n = config.params.n;
    const auto inputs = inputs_for_gap(n, config.gap);

    MajorityRunReport report;
    report.n = n;
    report.gap = config.gap;
    report.seed = config.seed;
    const auto count_a = static_cast<std::uint64_t>((static_cast<std::int64_t>(n) + config.gap) / 2);
    report.expected = exact_majority_oracle(count_a, n - count_a);

    auto pop = new_population(proto, std::span<const Symbol>(inputs), config.seed);
    std::optional<MassLedger> ledger;
    if (config.use_ledger) ledger.emplace(pop.agents(), config.params.depth, config.gap);
    std::optional<TimelineRecorder<AgentState>> recorder;
    if (!config.fields.empty()) {
        recorder.emplace(config.fields, config.snapshot_dt, n, [](const AgentState& s) { return int(s.phase); });
        recorder->set_marks(config.marks);
    }

    MajorityWatch watch{config, report, ledger ? &*ledger : nullptr, recorder ? &*recorder : nullptr};
    StopCondition<AgentState> stop = Silent{};
    if (config.stop_time) stop = MaxParallelTime{*config.stop_time};
    auto result = run_until(std::move(pop), proto, stop, guard_for_time(config.guard_time, n), RunOptions{}, watch);

    report.silent = result.silent;
    report.stabilization_time = result.stabilization_time;
    report.interactions = result.interactions;
    report.parallel_time = result.parallel_time;
    report.stopped_by = result.stopped_by;
    report.output = common_output(result.population.agents());
    report.correct = report.silent && report.output && *report.output == report.expected;
    if (ledger) {
        report.ledger_checked = ledger->checked();
        report.ledger_violations = ledger->violations();
        if (ledger->recount() != ledger->total_units())
            report.ledger_violations.push_back({result.interactions, "ledger recount disagrees with running total"});
    }
    if (recorder) {
        recorder->finish(result.population);
        report.timeline = recorder->take();
    }
    return report;
}

BackupRunReport run_backup(std::span<const Symbol> inputs, std::uint64_t seed, double guard_time,
                           std::optional<double> stop_time, std::vector<std::string> fields,
                           double snapshot_dt, std::vector<double> marks) {
    const BackupProtocol proto;
    std::uint64_t count_a = 0, count_b = 0;
    for (auto s : inputs) {
        if (s == Symbol::A) ++count_a;
        else if (s == Symbol::B) ++count_b;
        else throw std::invalid_argument("input must be A or B");
    }
    BackupRunReport report;
    report.expected = exact_majority_oracle(count_a, count_b);
    auto pop = new_population(proto, inputs, seed);
    const auto n = pop.size();
    StopCondition<BackupState> stop = Silent{};
    if (stop_time) stop = MaxParallelTime{*stop_time};

    auto finish = [&](auto& result) {
        report.silent = result.silent;
        report.stabilization_time = result.stabilization_time;
        report.interactions = result.interactions;
        report.parallel_time = result.parallel_time;
        report.stopped_by = result.stopped_by;
        const auto agents = result.population.agents();
        report.output = agents.front().output;
        for (const auto& a : agents)
            if (a.output != *report.output) report.output.reset();
        report.correct = report.silent && report.output && *report.output == report.expected;
    };
    if (fields.empty()) {
        auto result = run_until(std::move(pop), proto, stop, guard_for_time(guard_time, n));
        finish(result);
    } else {
        TimelineRecorder<BackupState> recorder(std::move(fields), snapshot_dt, n);
        recorder.set_marks(std::move(marks));
        auto result = run_until(std::move(pop), proto, stop, guard_for_time(guard_time, n), RunOptions{}, recorder);
        finish(result);
        recorder.finish(result.population);
        report.timeline = recorder.take();
    }
    return report;
}

// ---------------------------------------------------------------------------
// Statistics

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return std::nan("");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double ExperimentResult::mean() const { return mean_of(samples); }

double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) return std::nan("");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double epidemic_prediction(double a, double b) {
    return 0.5 * (std::log(b) - std::log(1 - b) - std::log(a) + std::log(1 - a));
}

double cancel_prediction(double a, double b, double d, std::uint64_t n) {
    const double eps = 1.0 / static_cast<double>(n);
    return (std::log(b) - std::log(a) - std::log(b - d + eps) + std::log(a - d + eps)) / (2 * (a - b));
}

double one_sided_prediction(double a, double b1, double b2) { return (std::log(b1) - std::log(b2)) / (2 * a); }

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index) { return base + index; }

// ---------------------------------------------------------------------------
// Experiments

namespace {

// Three-kind token for the cancel experiments: 0 = spent, 1 = A, 2 = B.
struct Token {
    std::uint8_t kind = 0;
    friend bool operator==(const Token&, const Token&) = default;
};

}  // namespace
}  // namespace popsim

template <>
struct std::hash<popsim::Token> {
    std::size_t operator()(const popsim::Token& t) const noexcept { return t.kind; }
};

namespace popsim {
namespace {

struct MutualCancel {
    using State = Token;
    using Input = std::uint8_t;
    State init(Input kind) const { return {kind}; }
    void interact(State& u, State& v, Coin&) const {
        if (u.kind + v.kind == 3) u.kind = v.kind = 0;
    }
    bool is_null(const State& u, const State& v) const { return u.kind + v.kind != 3; }
};

// A removes B and stays.
struct OneSidedCancel {
    using State = Token;
    using Input = std::uint8_t;
    State init(Input kind) const { return {kind}; }
    void interact(State& u, State& v, Coin&) const {
        if (u.kind == 1 && v.kind == 2) v.kind = 0;
        else if (u.kind == 2 && v.kind == 1) u.kind = 0;
    }
    bool is_null(const State& u, const State& v) const { return u.kind + v.kind != 3; }
};

// Counts changed interactions and stops after `target` of them.
struct EventCounter {
    std::uint64_t target;
    std::uint64_t seen = 0;
    void on_step(const auto&, const InteractionRecord& rec) { seen += rec.changed; }
    bool stop_requested() const { return seen >= target; }
};

template <class P>
double time_to_events(const P& proto, std::vector<typename P::State> agents, std::uint64_t seed,
                      std::uint64_t events) {
    const auto n = agents.size();
    Population<typename P::State> pop(std::move(agents), seed);
    if (events == 0) return 0.0;
    RunOptions options;
    options.check_interval = 1e9;
    constexpr double guard = 1e5;
    auto result = run_until(std::move(pop), proto, MaxParallelTime{guard}, guard_for_time(guard, n), options,
                            EventCounter{events});
    if (result.stopped_by != StopKind::Observer) throw std::runtime_error("experiment hit its guard");
    return result.parallel_time;
}

std::uint64_t count_of(double fraction, std::uint64_t n) {
    return static_cast<std::uint64_t>(std::llround(fraction * static_cast<double>(n)));
}

void finish_relative(ExperimentResult& r) {
    const double m = r.mean();
    r.extra["mean"] = m;
    r.extra["relative_error"] = std::abs(m - r.prediction) / r.prediction;
    r.pass = !r.samples.empty() && std::abs(m - r.prediction) <= r.tolerance * r.prediction;
}

void check_config(const ExperimentConfig& c) {
    if (c.n < 2) throw std::invalid_argument("population too small");
    if (c.trials < 1) throw std::invalid_argument("trials must be positive");
    if (c.jobs < 1) throw std::invalid_argument("jobs must be positive");
    if (!(c.tolerance > 0)) throw std::invalid_argument("tolerance must be positive");
}

nlohmann::json base_params(const ExperimentConfig& c) {
    return {{"n", c.n}, {"trials", c.trials}, {"seed", c.seed}};
}

}  // namespace

ExperimentResult epidemic_experiment(const ExperimentConfig& config, double a, double b) {
    check_config(config);
    if (!(0 < a && a < b && b < 1)) throw std::invalid_argument("need 0 < a < b < 1");
    const auto n = config.n;
    const auto start = static_cast<std::uint64_t>(std::ceil(a * static_cast<double>(n)));
    const auto goal = static_cast<std::uint64_t>(std::ceil(b * static_cast<double>(n)));
    ExperimentResult r;
    r.name = "epidemic";
    r.params = base_params(config);
    r.params["a"] = a;
    r.params["b"] = b;
    r.prediction = epidemic_prediction(a, b);
    r.tolerance = config.tolerance;
    r.samples = run_trials<double>(config.trials, config.jobs, [&](int i) {
        std::vector<EpidemicState> agents(n);
        for (std::uint64_t j = 0; j < start; ++j) agents[j].infected = true;
        return time_to_events(EpidemicProtocol{}, std::move(agents), trial_seed(config.seed, i),
                              goal > start ? goal - start : 0);
    });
    finish_relative(r);
    return r;
}

ExperimentResult cancel_experiment(const ExperimentConfig& config, double a, double b, double d) {
    check_config(config);
    if (!(0 < d && d < b && b < a && a + b <= 1)) throw std::invalid_argument("need 0 < d < b < a and a + b <= 1");
    const auto n = config.n;
    const auto count_a = count_of(a, n), count_b = count_of(b, n), pairs = count_of(d, n);
    if (pairs > count_b) throw std::invalid_argument("d n exceeds the B count");
    ExperimentResult r;
    r.name = "cancel";
    r.params = base_params(config);
    r.params["a"] = a;
    r.params["b"] = b;
    r.params["d"] = d;
    r.prediction = cancel_prediction(a, b, d, n);
    r.tolerance = config.tolerance;
    r.samples = run_trials<double>(config.trials, config.jobs, [&](int i) {
        std::vector<Token> agents(n);
        for (std::uint64_t j = 0; j < count_a; ++j) agents[j].kind = 1;
        for (std::uint64_t j = count_a; j < count_a + count_b; ++j) agents[j].kind = 2;
        return time_to_events(MutualCancel{}, std::move(agents), trial_seed(config.seed, i), pairs);
    });
    finish_relative(r);
    return r;
}

ExperimentResult one_sided_cancel_experiment(const ExperimentConfig& config, double a, double b1, double b2) {
    check_config(config);
    if (!(0 < b2 && b2 < b1 && b1 < 1 && 0 < a && a < 1))
        throw std::invalid_argument("need 0 < b2 < b1 < 1 and 0 < a < 1");
    if (a + b1 > 1) throw std::invalid_argument("a + b1 must not exceed 1");
    const auto n = config.n;
    const auto count_a = count_of(a, n), count_b = count_of(b1, n), left = count_of(b2, n);
    ExperimentResult r;
    r.name = "one-sided";
    r.params = base_params(config);
    r.params["a"] = a;
    r.params["b1"] = b1;
    r.params["b2"] = b2;
    r.prediction = one_sided_prediction(a, b1, b2);
    r.tolerance = config.tolerance;
    r.samples = run_trials<double>(config.trials, config.jobs, [&](int i) {
        std::vector<Token> agents(n);
        for (std::uint64_t j = 0; j < count_a; ++j) agents[j].kind = 1;
        for (std::uint64_t j = count_a; j < count_a + count_b; ++j) agents[j].kind = 2;
        return time_to_events(OneSidedCancel{}, std::move(agents), trial_seed(config.seed, i), count_b - left);
    });
    finish_relative(r);
    return r;
}

ExperimentResult minutes_experiment(const ExperimentConfig& config, double p, int k, int depth, int first,
                                    int last) {
    check_config(config);
    if (!(p > 0 && p <= 1)) throw std::invalid_argument("p must be in (0, 1]");
    ExperimentResult r;
    r.name = "minutes";
    r.params = base_params(config);
    r.params["p"] = p;
    r.params["k"] = k;
    r.params["L"] = depth;
    r.params["first_minute"] = first;
    r.params["last_minute"] = last;
    r.prediction = typical_minute_length(p);
    r.tolerance = config.tolerance;

    auto runs = run_trials<MinuteStats>(config.trials, config.jobs, [&](int i) {
        MinuteRunConfig mc;
        mc.n = config.n;
        mc.p = p;
        mc.minutes_per_hour = k;
        mc.depth = depth;
        mc.first_minute = first;
        mc.last_minute = last;
        mc.seed = trial_seed(config.seed, i);
        mc.keep_tails = false;
        return measure_minutes(mc);
    });
    bool complete = true;
    for (const auto& s : runs) {
        complete = complete && s.complete;
        r.samples.insert(r.samples.end(), s.minute_lengths.begin(), s.minute_lengths.end());
    }
    const auto [lo, hi] = minute_length_bounds(p);
    const auto inside = std::count_if(r.samples.begin(), r.samples.end(),
                                      [lo = lo, hi = hi](double x) { return x >= lo && x <= hi; });
    const double fraction = r.samples.empty() ? 0.0 : static_cast<double>(inside) / static_cast<double>(r.samples.size());
    const double m = r.mean();
    r.extra["lower_bound"] = lo;
    r.extra["upper_bound"] = hi;
    r.extra["in_bounds_fraction"] = fraction;
    r.extra["mean"] = m;
    r.extra["complete"] = complete;
    r.extra["mean_relative_error"] = std::abs(m - r.prediction) / r.prediction;
    r.pass = complete && fraction >= 0.95 && std::abs(m - r.prediction) <= r.tolerance * r.prediction;
    return r;
}

}  // namespace popsim
