#include "popsim/clock.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace popsim {

ClockProtocol::ClockProtocol(double drip_probability, int max_minute)
    : p_(drip_probability), max_minute_(max_minute) {
    if (!(p_ >= 0.0 && p_ <= 1.0)) throw std::invalid_argument("p must be in [0, 1]");
    if (max_minute < 0 || max_minute > 65535) throw std::invalid_argument("max minute out of range");
}

void ClockProtocol::interact(State& u, State& v, Coin& coin) const {
    if (u.minute != v.minute) {
        u.minute = v.minute = std::max(u.minute, v.minute);  // epidemic
    } else if (u.minute < max_minute_) {
        if (p_ >= 1.0 || coin.flip(p_)) ++u.minute;  // drip
    }
}

bool ClockProtocol::is_null(const State& u, const State& v) const {
    if (u.minute != v.minute) return false;
    return u.minute >= max_minute_ || p_ <= 0.0;
}

std::pair<ClockState, ClockState> clock_transition(ClockState u, ClockState v, double p,
                                                   int max_minute, Coin& coin) {
    ClockProtocol(p, max_minute).interact(u, v, coin);
    return {u, v};
}

namespace {

struct MinuteTracker {
    const MinuteRunConfig& config;
    MinuteStats& stats;
    std::vector<std::uint64_t> at_least;  // agents with minute >= i
    std::uint64_t need_0001, need_01, need_09;
    int top = 0;
    std::uint64_t next_snapshot = 0;
    std::uint64_t snapshot_every;
    double n;
    bool window_done = false;

    MinuteTracker(const MinuteRunConfig& c, MinuteStats& s, int max_minute)
        : config(c), stats(s), at_least(static_cast<std::size_t>(max_minute) + 2, 0),
          need_0001(static_cast<std::uint64_t>(std::floor(0.001 * c.n)) + 1),
          need_01(static_cast<std::uint64_t>(std::ceil(0.1 * c.n))),
          need_09(static_cast<std::uint64_t>(std::ceil(0.9 * c.n))),
          snapshot_every(std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(c.snapshot_dt * c.n)))),
          n(static_cast<double>(c.n)) {
        at_least[0] = c.n;
        const auto size = at_least.size();
        stats.t_plus.assign(size, std::nullopt);
        stats.t_0001.assign(size, std::nullopt);
        stats.t_01.assign(size, std::nullopt);
        stats.t_09.assign(size, std::nullopt);
        for (auto* v : {&stats.t_plus, &stats.t_0001, &stats.t_01, &stats.t_09}) (*v)[0] = 0.0;
        snapshot(0);
        next_snapshot = snapshot_every;
    }

    void snapshot(std::uint64_t index) {
        stats.times.push_back(static_cast<double>(index) / n);
        if (!config.keep_tails) return;
        std::vector<double> tail(static_cast<std::size_t>(top) + 2);
        for (int i = 0; i <= top + 1 && i < static_cast<int>(at_least.size()); ++i)
            tail[static_cast<std::size_t>(i)] = static_cast<double>(at_least[static_cast<std::size_t>(i)]) / n;
        stats.tails.push_back(std::move(tail));
    }

    void moved(int from, int to, std::uint64_t index) {
        const double t = static_cast<double>(index) / n;
        for (int i = from + 1; i <= to; ++i) {
            const auto c = ++at_least[static_cast<std::size_t>(i)];
            auto idx = static_cast<std::size_t>(i);
            if (c == 1) stats.t_plus[idx] = t;
            if (c == need_0001) stats.t_0001[idx] = t;
            if (c == need_01) stats.t_01[idx] = t;
            if (c == need_09) stats.t_09[idx] = t;
        }
        top = std::max(top, to);
        const auto window_end = static_cast<std::size_t>(config.last_minute + 1);
        if (!window_done && window_end < stats.t_01.size() && stats.t_01[window_end]) window_done = true;
    }

    void on_interaction(const Interaction<ClockState>& rec) {
        if (rec.record.changed) {
            if (rec.after_first.minute != rec.before_first.minute)
                moved(rec.before_first.minute, rec.after_first.minute, rec.record.index);
            if (rec.after_second.minute != rec.before_second.minute)
                moved(rec.before_second.minute, rec.after_second.minute, rec.record.index);
        }
        if (rec.record.index >= next_snapshot) {
            snapshot(rec.record.index);
            next_snapshot += snapshot_every;
        }
    }

    bool stop_requested() const { return !config.stop_time && window_done; }
};

}  // namespace

MinuteStats measure_minutes(const MinuteRunConfig& config) {
    const int max_minute = config.minutes_per_hour * config.depth;
    if (config.first_minute < 0 || config.last_minute < config.first_minute)
        throw std::invalid_argument("bad minute window");
    if (config.last_minute + 1 > max_minute)
        throw std::invalid_argument("minute window exceeds k*L");
    if (!(config.snapshot_dt > 0)) throw std::invalid_argument("snapshot interval must be positive");

    const ClockProtocol proto(config.p, max_minute);
    std::vector<ClockState> agents(config.n, ClockState{0});
    Population<ClockState> pop(std::move(agents), config.seed);

    MinuteStats stats;
    stats.config = config;
    MinuteTracker tracker(config, stats, max_minute);

    StopCondition<ClockState> stop = MaxParallelTime{config.guard_time};
    if (config.stop_time) stop = MaxParallelTime{std::min(*config.stop_time, config.guard_time)};
    auto guard = guard_for_time(config.guard_time, config.n);
    RunOptions options;
    options.check_interval = 1e9;  // no periodic checks needed
    auto result = run_until(std::move(pop), proto, stop, guard, options, tracker);
    stats.end_time = result.parallel_time;

    stats.complete = true;
    for (int i = config.first_minute; i <= config.last_minute; ++i) {
        const auto& lo = stats.t_01[static_cast<std::size_t>(i)];
        const auto& hi = stats.t_01[static_cast<std::size_t>(i + 1)];
        if (lo && hi) {
            stats.minute_lengths.push_back(*hi - *lo);
        } else {
            stats.complete = false;
        }
    }
    return stats;
}

FrontTailCount front_tail_violations(const MinuteStats& stats, double p, double lo, double hi,
                                     double slack) {
    FrontTailCount count;
    for (const auto& tail : stats.tails) {
        for (std::size_t i = 0; i + 1 < tail.size(); ++i) {
            const double c = tail[i];
            if (c < lo || c > hi) continue;
            ++count.checked;
            if (tail[i + 1] > slack * p * c * c) ++count.violated;
        }
    }
    return count;
}

std::pair<double, double> minute_length_bounds(double p) {
    const double lower = std::max(0.45, 0.5 * std::log(1.0 + 2.0 / (9.0 * p)) - 0.01);
    const double upper = 2.11 + 0.5 * std::log(1.0 / p);
    return {lower, upper};
}

double typical_minute_length(double p) { return 0.75 + 0.5 * std::log(1.0 / p); }

std::vector<HourInterval> hour_projection(const MinuteStats& stats) {
    const int k = stats.config.minutes_per_hour;
    const int max_minute = k * stats.config.depth;
    std::vector<HourInterval> hours;
    for (int h = 0; h * k <= max_minute; ++h) {
        HourInterval interval;
        interval.hour = h;
        interval.start = stats.t_09[static_cast<std::size_t>(h * k)];
        const int beyond = (h + 1) * k;
        if (beyond < static_cast<int>(stats.t_0001.size())) interval.end = stats.t_0001[static_cast<std::size_t>(beyond)];
        hours.push_back(interval);
    }
    return hours;
}

// ---------------------------------------------------------------------------
// Mean field

MeanFieldState meanfield_start(int max_minute, double dt) {
    MeanFieldState s;
    s.f.assign(static_cast<std::size_t>(max_minute) + 1, 0.0);
    s.f[0] = 1.0;
    s.dt = dt;
    return s;
}

namespace {

std::vector<double> euler(const std::vector<double>& f, double p, double dt) {
    const std::size_t size = f.size();
    std::vector<double> next(size);
    double below = 0.0;  // sum_{j<i} f_j
    double total = 0.0;
    for (double x : f) total += x;
    for (std::size_t i = 0; i < size; ++i) {
        const double above = total - below - f[i];
        double rate = 2.0 * f[i] * (below - above);
        if (i > 0) rate += p * f[i - 1] * f[i - 1];
        if (i + 1 < size) rate -= p * f[i] * f[i];
        next[i] = f[i] + dt * rate;
        below += f[i];
    }
    return next;
}

bool settle(std::vector<double>& f) {
    double sum = 0.0;
    for (auto& x : f) {
        if (x < 0.0) {
            if (x < -1e-12) return false;
            x = 0.0;
        }
        sum += x;
    }
    for (auto& x : f) x /= sum;
    return true;
}

}  // namespace

MeanFieldState meanfield_step(const MeanFieldState& s, double p) {
    if (!(s.dt > 0.0) || s.dt > 0.01) throw std::invalid_argument("dt must be in (0, 0.01]");
    MeanFieldState next = s;
    next.f = euler(s.f, p, s.dt);
    if (!settle(next.f)) {
        auto half = euler(euler(s.f, p, s.dt / 2), p, s.dt / 2);
        if (!settle(half)) throw std::runtime_error("integration unstable");
        next.f = std::move(half);
    }
    next.t = s.t + s.dt;
    return next;
}

MeanFieldState meanfield_integrate(MeanFieldState s, double p, double until) {
    const auto steps = static_cast<long>(std::llround((until - s.t) / s.dt));
    for (long i = 0; i < steps; ++i) s = meanfield_step(s, p);
    return s;
}

std::vector<double> minute_distribution(std::span<const ClockState> agents, int max_minute) {
    std::vector<double> f(static_cast<std::size_t>(max_minute) + 1, 0.0);
    for (const auto& a : agents) f[a.minute] += 1.0;
    for (auto& x : f) x /= static_cast<double>(agents.size());
    return f;
}

}  // namespace popsim
