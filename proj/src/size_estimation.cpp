#include "popsim/size_estimation.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <map>

namespace popsim {

std::string describe(const SizeEstState& s) {
    return std::string(s.kind == SizeKind::L ? "L" : "F") + std::to_string(s.level);
}

void SizeEstimationProtocol::interact(State& u, State& v, Coin&) const {
    if (u.kind == SizeKind::L && v.kind == SizeKind::L) {
        if (u.level == v.level) {
            ++u.level;
            v = {SizeKind::F, u.level};
        }
    } else if (u.kind == SizeKind::F && v.kind == SizeKind::F) {
        u.level = v.level = std::max(u.level, v.level);
    }
}

bool SizeEstimationProtocol::is_null(const State& u, const State& v) const {
    if (u.kind != v.kind) return true;
    if (u.kind == SizeKind::L) return u.level != v.level;
    return u.level == v.level;
}

std::pair<SizeEstState, SizeEstState> SizeEstimationProtocol::transition(State u, State v) const {
    AlwaysCoin coin;
    interact(u, v, coin);
    return {u, v};
}

int floor_log2(std::uint64_t n) { return n == 0 ? -1 : static_cast<int>(std::bit_width(n)) - 1; }

std::uint64_t leader_mass(std::span<const SizeEstState> agents) {
    std::uint64_t sum = 0;
    for (const auto& a : agents)
        if (a.kind == SizeKind::L) sum += std::uint64_t{1} << a.level;
    return sum;
}

SizeEstReport sizeest_check(std::span<const SizeEstState> agents, std::uint64_t n) {
    SizeEstReport report;
    report.n = n;
    std::map<int, int> followers;
    for (const auto& a : agents) {
        if (a.kind == SizeKind::L) report.l_levels.push_back(a.level);
        else ++followers[a.level];
    }
    std::sort(report.l_levels.begin(), report.l_levels.end());
    if (followers.size() == 1) report.f_value = followers.begin()->first;

    std::vector<int> bits;
    for (int b = 0; b < 64; ++b)
        if ((n >> b) & 1u) bits.push_back(b);
    if (agents.size() != n) report.problems.push_back("population size differs from n");
    if (report.l_levels != bits) {
        std::string got;
        for (int l : report.l_levels) got += (got.empty() ? "" : ",") + std::to_string(l);
        report.problems.push_back("leader levels {" + got + "} are not the binary digits of n");
    }
    if (!report.f_value) {
        std::string got;
        for (auto [value, count] : followers)
            got += (got.empty() ? "" : ",") + std::to_string(value) + "x" + std::to_string(count);
        report.problems.push_back("followers disagree: {" + got + "}");
    } else if (*report.f_value != floor_log2(n)) {
        report.problems.push_back("follower value " + std::to_string(*report.f_value) +
                                  " differs from floor(log2 n)");
    }
    report.ok = report.problems.empty();
    return report;
}

namespace {

// Tracks level counts so silence is known at the exact interaction it starts.
struct SilenceTracker {
    std::uint64_t n;
    std::array<std::uint64_t, 66> leaders{};
    std::array<std::uint64_t, 66> followers{};
    int crowded_levels = 0;      // levels holding two or more leaders
    int follower_values = 0;     // distinct follower values
    std::uint64_t violations = 0;
    std::optional<std::uint64_t> silent_at;

    explicit SilenceTracker(std::uint64_t size) : n(size) {
        leaders[0] = size;
        crowded_levels = size >= 2 ? 1 : 0;
    }

    void add(const SizeEstState& s, int delta) {
        auto& slot = (s.kind == SizeKind::L ? leaders : followers)[s.level];
        const auto before = slot;
        slot = static_cast<std::uint64_t>(static_cast<std::int64_t>(slot) + delta);
        if (s.kind == SizeKind::L) {
            crowded_levels += (slot >= 2) - (before >= 2);
        } else {
            follower_values += (slot >= 1) - (before >= 1);
        }
    }

    static std::int64_t mass(const SizeEstState& s) {
        return s.kind == SizeKind::L ? std::int64_t{1} << s.level : 0;
    }

    void on_interaction(const Interaction<SizeEstState>& rec) {
        if (!rec.record.changed) return;
        if (mass(rec.before_first) + mass(rec.before_second) != mass(rec.after_first) + mass(rec.after_second))
            ++violations;
        add(rec.before_first, -1);
        add(rec.before_second, -1);
        add(rec.after_first, +1);
        add(rec.after_second, +1);
        if (crowded_levels == 0 && follower_values <= 1) silent_at = rec.record.index;
    }

    bool stop_requested() const { return silent_at.has_value(); }
};

}  // namespace

SizeEstReport run_size_estimation(std::uint64_t n, std::uint64_t seed, double guard_time) {
    if (n < 2) throw std::invalid_argument("population too small");
    if (n >= (std::uint64_t{1} << 62)) throw std::invalid_argument("n too large");
    const SizeEstimationProtocol proto;
    Population<SizeEstState> pop(std::vector<SizeEstState>(n), seed);
    SilenceTracker tracker(n);
    RunOptions options;
    options.check_interval = guard_time + 1.0;
    auto result = run_until(std::move(pop), proto, MaxParallelTime{guard_time},
                            guard_for_time(guard_time, n), options, tracker);
    auto report = sizeest_check(result.population.agents(), n);
    report.interactions = result.interactions;
    report.conservation_violations = tracker.violations;
    if (tracker.violations > 0) {
        report.problems.push_back("leader mass changed in " + std::to_string(tracker.violations) + " interactions");
        report.ok = false;
    }
    if (tracker.silent_at) {
        report.silence_time = static_cast<double>(*tracker.silent_at) / static_cast<double>(n);
    } else {
        report.problems.push_back("not silent before the guard");
        report.ok = false;
    }
    return report;
}

}  // namespace popsim
