#pragma once

// Snapshots, timelines, stabilization, the timing experiments and a
// trial runner.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "popsim/clock.hpp"
#include "popsim/engine.hpp"
#include "popsim/ledger.hpp"
#include "popsim/majority.hpp"
#include "popsim/size_estimation.hpp"

namespace popsim {

// ---------------------------------------------------------------------------
// Projections

/// Two-state infection used by the epidemic experiment.
struct EpidemicState {
    bool infected = false;
    friend bool operator==(const EpidemicState&, const EpidemicState&) = default;
};

class EpidemicProtocol {
public:
    using State = EpidemicState;
    using Input = bool;
    State init(bool infected) const { return {infected}; }
    void interact(State& u, State& v, Coin&) const { u.infected = v.infected = u.infected || v.infected; }
    bool is_null(const State& u, const State& v) const { return u.infected == v.infected; }
};

const std::vector<std::string>& known_fields(const AgentState*);
const std::vector<std::string>& known_fields(const BackupState*);
const std::vector<std::string>& known_fields(const ClockState*);
const std::vector<std::string>& known_fields(const SizeEstState*);
const std::vector<std::string>& known_fields(const EpidemicState*);

std::string field_value(const AgentState& s, std::string_view field);
std::string field_value(const BackupState& s, std::string_view field);
std::string field_value(const ClockState& s, std::string_view field);
std::string field_value(const SizeEstState& s, std::string_view field);
std::string field_value(const EpidemicState& s, std::string_view field);

template <class State>
const std::vector<std::string>& known_fields() {
    return known_fields(static_cast<const State*>(nullptr));
}

/// Throws std::invalid_argument naming the first unknown field.
template <class State>
void check_fields(const std::vector<std::string>& fields) {
    if (fields.empty()) throw std::invalid_argument("projection needs at least one field");
    const auto& known = known_fields<State>();
    for (const auto& f : fields)
        if (std::find(known.begin(), known.end(), f) == known.end())
            throw std::invalid_argument("unknown field '" + f + "'");
}

struct Snapshot {
    double parallel_time = 0.0;
    std::map<std::string, std::uint64_t> counts;  // '|'-joined field values -> agents
    std::uint64_t total() const;
};

struct Timeline {
    std::vector<std::string> fields;
    std::vector<Snapshot> snapshots;
};

template <class State>
std::string projection_key(const State& s, const std::vector<std::string>& fields) {
    std::string key;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) key += '|';
        key += field_value(s, fields[i]);
    }
    return key;
}

template <class State>
Snapshot take_snapshot(std::span<const State> agents, double parallel_time,
                       const std::vector<std::string>& fields) {
    std::unordered_map<State, std::uint64_t> distinct;
    for (const auto& s : agents) ++distinct[s];
    Snapshot snap;
    snap.parallel_time = parallel_time;
    for (const auto& [state, count] : distinct) snap.counts[projection_key(state, fields)] += count;
    return snap;
}

/// Observer that snapshots every `dt` parallel time and whenever the marker
/// of some agent first exceeds every earlier marker (phase entry for majority).
template <class State>
class TimelineRecorder {
public:
    using Marker = std::function<int(const State&)>;

    TimelineRecorder(std::vector<std::string> fields, double dt, std::size_t n, Marker marker = {})
        : marker_(std::move(marker)), n_(n) {
        check_fields<State>(fields);
        if (!(dt > 0)) throw std::invalid_argument("snapshot interval must be positive");
        timeline_.fields = std::move(fields);
        every_ = std::max<std::uint64_t>(1, detail::interactions_for(dt, n));
    }

    void on_check(const Population<State>& pop) {
        if (!started_) {
            started_ = true;
            record(pop);
            next_ = pop.interactions() + every_;
            if (marker_)
                for (const auto& s : pop.agents()) top_ = std::max(top_, marker_(s));
        }
    }

    void on_interaction(const Interaction<State>& rec) {
        if (marker_ && rec.record.changed) {
            const int m = std::max(marker_(rec.after_first), marker_(rec.after_second));
            if (m > top_) {
                top_ = m;
                forced_ = true;
            }
        }
    }

    /// Extra snapshot times.
    void set_marks(std::vector<double> times) {
        marks_.clear();
        for (double t : times) marks_.push_back(detail::interactions_for(t, n_));
        std::sort(marks_.begin(), marks_.end(), std::greater<>());
    }

    void on_step(const Population<State>& pop, const InteractionRecord& rec) {
        while (!marks_.empty() && marks_.back() <= rec.index) {
            marks_.pop_back();
            forced_ = true;
        }
        if (forced_ || rec.index >= next_) {
            forced_ = false;
            if (rec.index >= next_) next_ += every_ * ((rec.index - next_) / every_ + 1);
            record(pop);
        }
    }

    /// Adds a final snapshot unless one already exists at this time.
    void finish(const Population<State>& pop) {
        if (timeline_.snapshots.empty() || timeline_.snapshots.back().parallel_time < pop.parallel_time())
            record(pop);
    }

    const Timeline& timeline() const noexcept { return timeline_; }
    Timeline take() { return std::move(timeline_); }

private:
    void record(const Population<State>& pop) {
        timeline_.snapshots.push_back(take_snapshot<State>(pop.agents(), pop.parallel_time(), timeline_.fields));
    }

    Timeline timeline_;
    Marker marker_;
    std::vector<std::uint64_t> marks_;  // descending
    std::size_t n_;
    std::uint64_t every_ = 1;
    std::uint64_t next_ = 0;
    int top_ = 0;
    bool forced_ = false;
    bool started_ = false;
};

/// Earliest snapshot time from which every later snapshot shows only
/// `final_output`. Needs an "output" field; absent for non-silent runs.
std::optional<double> stabilization_time(const Timeline& timeline, const std::string& final_output,
                                         bool silent);

// ---------------------------------------------------------------------------
// Majority runs

struct MajorityRunConfig {
    MajorityParams params;
    std::int64_t gap = 0;
    std::uint64_t seed = 1;
    /// Stop at silence, or at this parallel time when set.
    std::optional<double> stop_time;
    double guard_time = 100000.0;
    bool use_ledger = false;
    /// Timeline snapshots; empty disables recording.
    std::vector<std::string> fields;
    double snapshot_dt = 0.25;
    std::vector<double> marks;
    /// Called once when the first agent enters each phase 1..10.
    std::function<void(int phase, const Population<AgentState>&)> on_phase_entry;
    /// Stop right after the first agent enters this phase.
    std::optional<int> stop_at_phase;
};

struct MajorityRunReport {
    std::uint64_t n = 0;
    std::int64_t gap = 0;
    std::uint64_t seed = 0;
    Symbol expected = Symbol::T;
    std::optional<Symbol> output;  // common output, if all agents agree
    bool silent = false;
    bool correct = false;
    std::optional<double> stabilization_time;
    std::uint64_t interactions = 0;
    double parallel_time = 0.0;
    StopKind stopped_by = StopKind::MaxInteractions;
    int max_phase = 0;
    std::array<std::optional<double>, kPhaseCount> phase_entry{};
    /// Phase the run was in when its output last changed.
    int stabilization_phase = 0;
    bool phase_monotone = true;
    std::uint64_t ledger_checked = 0;
    std::vector<MassLedger::Violation> ledger_violations;
    std::optional<Timeline> timeline;
};

MajorityRunReport run_majority(const MajorityRunConfig& config);

// ---------------------------------------------------------------------------
// Backup and clock helpers used by the command layer

struct BackupRunReport {
    Symbol expected = Symbol::T;
    std::optional<Symbol> output;
    bool silent = false;
    bool correct = false;
    std::optional<double> stabilization_time;
    std::uint64_t interactions = 0;
    double parallel_time = 0.0;
    StopKind stopped_by = StopKind::MaxInteractions;
    std::optional<Timeline> timeline;
};

BackupRunReport run_backup(std::span<const Symbol> inputs, std::uint64_t seed, double guard_time,
                           std::optional<double> stop_time = std::nullopt,
                           std::vector<std::string> fields = {}, double snapshot_dt = 0.25,
                           std::vector<double> marks = {});

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentResult {
    std::string name;
    nlohmann::json params = nlohmann::json::object();
    std::vector<double> samples;
    double prediction = 0.0;
    double tolerance = 0.0;  // relative
    bool pass = false;
    nlohmann::json extra = nlohmann::json::object();

    double mean() const;
};

double mean_of(const std::vector<double>& xs);
/// Empirical quantile by linear interpolation between order statistics.
double quantile(std::vector<double> xs, double q);

double epidemic_prediction(double a, double b);
double cancel_prediction(double a, double b, double d, std::uint64_t n);
double one_sided_prediction(double a, double b1, double b2);

/// Seed for trial `index` of a batch started from `base`.
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index);

struct ExperimentConfig {
    std::uint64_t n = 1000000;
    int trials = 20;
    std::uint64_t seed = 1;
    int jobs = 1;
    double tolerance = 0.05;
};

/// Time for an epidemic to grow from ceil(a n) to ceil(b n) infected agents.
ExperimentResult epidemic_experiment(const ExperimentConfig& config, double a = 0.1, double b = 0.9);
/// Time for d n opposite pairs to annihilate starting from a n and b n agents.
ExperimentResult cancel_experiment(const ExperimentConfig& config, double a = 0.1125, double b = 0.0843,
                                   double d = 0.05);
/// Time for a fixed a n agents to knock b1 n others down to b2 n.
ExperimentResult one_sided_cancel_experiment(const ExperimentConfig& config, double a = 0.5,
                                             double b1 = 0.5, double b2 = 0.05);
/// Minute lengths of a standalone clock over minutes [first, last].
ExperimentResult minutes_experiment(const ExperimentConfig& config, double p = 1.0, int k = 45,
                                    int depth = 10, int first = 9, int last = 18);

// ---------------------------------------------------------------------------
// Trials

/// Runs body(i) for i in [0, trials) on up to `jobs` threads. Results come
/// back in trial order whatever the scheduling.
template <class Result>
std::vector<Result> run_trials(int trials, int jobs, const std::function<Result(int)>& body) {
    if (trials < 0) throw std::invalid_argument("trials must be nonnegative");
    std::vector<std::optional<Result>> slots(static_cast<std::size_t>(trials));
    const int workers = std::max(1, std::min(jobs, trials));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    auto work = [&](int worker) {
        try {
            for (int i = worker; i < trials; i += workers) slots[static_cast<std::size_t>(i)] = body(i);
        } catch (...) {
            errors[static_cast<std::size_t>(worker)] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<Result> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace popsim

template <>
struct std::hash<popsim::EpidemicState> {
    std::size_t operator()(const popsim::EpidemicState& s) const noexcept { return s.infected; }
};
