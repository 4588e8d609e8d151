#pragma once

// Fixed-resolution phase clock run on its own: epidemic and drip reactions
// over a minute counter, crossing-time measurement and a mean-field model.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "popsim/engine.hpp"

namespace popsim {

struct ClockState {
    std::uint16_t minute = 0;
    friend bool operator==(const ClockState&, const ClockState&) = default;
};

class ClockProtocol {
public:
    using State = ClockState;
    using Input = std::uint16_t;  // starting minute

    ClockProtocol(double drip_probability, int max_minute);

    State init(Input minute) const { return {minute}; }
    void interact(State& u, State& v, Coin& coin) const;
    bool is_null(const State& u, const State& v) const;

    double drip_probability() const noexcept { return p_; }
    int max_minute() const noexcept { return max_minute_; }

private:
    double p_;
    int max_minute_;
};

std::pair<ClockState, ClockState> clock_transition(ClockState u, ClockState v, double p,
                                                   int max_minute, Coin& coin);

struct MinuteRunConfig {
    std::uint64_t n = 1000;
    double p = 1.0;
    int minutes_per_hour = 45;  // k
    int depth = 10;             // L
    int first_minute = 9;       // sampled minute lengths start here
    int last_minute = 18;       // ... and end here (needs minute last+1)
    std::uint64_t seed = 1;
    double snapshot_dt = 0.01;
    /// When set, keep running to this parallel time instead of stopping at
    /// the end of the window.
    std::optional<double> stop_time;
    double guard_time = 10000.0;
    /// Keep per-snapshot c_{>=i} tails (needed for front-tail checks and export).
    bool keep_tails = true;
};

struct MinuteStats {
    MinuteRunConfig config;
    std::vector<double> times;               // snapshot parallel times
    std::vector<std::vector<double>> tails;  // tails[s][i] = c_{>=i}(times[s]), i <= top occupied
    // First parallel time with at least one agent / >0.1% / >=10% / >=90% at minute >= i.
    std::vector<std::optional<double>> t_plus, t_0001, t_01, t_09;
    /// t01[i+1] - t01[i] for i in [first_minute, last_minute].
    std::vector<double> minute_lengths;
    bool complete = false;
    double end_time = 0.0;
};

MinuteStats measure_minutes(const MinuteRunConfig& config);

struct FrontTailCount {
    std::uint64_t checked = 0;
    std::uint64_t violated = 0;
    double rate() const { return checked == 0 ? 0.0 : static_cast<double>(violated) / checked; }
};

/// Over all snapshots and minutes with lo <= c_{>=i} <= hi, counts how often
/// c_{>=i+1} > slack * p * c_{>=i}^2.
FrontTailCount front_tail_violations(const MinuteStats& stats, double p, double lo = 0.01,
                                     double hi = 0.1, double slack = 2.0);

/// Minute-length bounds for drip probability p: lower max(0.45, ln(1+2/(9p))/2 - 0.01),
/// upper 2.11 + ln(1/p)/2.
std::pair<double, double> minute_length_bounds(double p);
/// Rough typical minute length 0.75 + ln(1/p)/2.
double typical_minute_length(double p);

// ---------------------------------------------------------------------------
// Hours

inline int hour_of(int minute, int minutes_per_hour) { return minute / minutes_per_hour; }

struct HourInterval {
    int hour = 0;
    std::optional<double> start;  // first time >= 90% of agents are at hour >= h
    std::optional<double> end;    // first time > 0.1% of agents are beyond hour h
    bool empty() const { return start && end && *end < *start; }
    std::optional<double> length() const {
        if (!start || !end) return std::nullopt;
        return *end - *start;
    }
};

std::vector<HourInterval> hour_projection(const MinuteStats& stats);

// ---------------------------------------------------------------------------
// Mean field

struct MeanFieldState {
    std::vector<double> f;  // fraction at each minute 0..kL
    double t = 0.0;
    double dt = 0.001;
};

MeanFieldState meanfield_start(int max_minute, double dt = 0.001);
/// One explicit Euler step of the clock rate equations, renormalized.
MeanFieldState meanfield_step(const MeanFieldState& s, double p);
MeanFieldState meanfield_integrate(MeanFieldState s, double p, double until);

/// Fraction of agents at each minute.
std::vector<double> minute_distribution(std::span<const ClockState> agents, int max_minute);

}  // namespace popsim

template <>
struct std::hash<popsim::ClockState> {
    std::size_t operator()(const popsim::ClockState& s) const noexcept { return s.minute; }
};
