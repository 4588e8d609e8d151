#pragma once

// Uniform random pairwise scheduler for population protocols.
//
// A protocol type plugs in through the ProtocolSpec concept: it names its
// per-agent State and Input types, builds initial states, applies the
// transition to an ordered pair in place, and answers whether a pair of
// states is a null interaction.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace popsim {

/// Source of the random bits a randomized transition consumes.
class Coin {
public:
    virtual ~Coin() = default;
    virtual bool flip(double probability) = 0;
};

/// Coin that fires whenever firing is possible at all. Used to decide
/// whether a randomized transition could ever change a pair.
class AlwaysCoin final : public Coin {
public:
    bool flip(double probability) override { return probability > 0.0; }
};

/// Seeded randomness owned by one run.
class Random final : public Coin {
public:
    explicit Random(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t below(std::uint64_t bound) {
        return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
    }
    bool flip(double probability) override {
        return std::bernoulli_distribution(probability)(engine_);
    }
    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

template <class P>
concept ProtocolSpec = requires(const P& proto, typename P::State& a, typename P::State& b,
                                const typename P::State& ca, Random& random,
                                const typename P::Input& input) {
    typename P::State;
    typename P::Input;
    { proto.init(input) } -> std::same_as<typename P::State>;
    proto.interact(a, b, random);
    { proto.is_null(ca, ca) } -> std::convertible_to<bool>;
    { std::hash<typename P::State>{}(ca) } -> std::convertible_to<std::size_t>;
    { ca == ca } -> std::convertible_to<bool>;
};

/// Protocols with an output map get stabilization tracking.
template <class P>
concept HasOutput = requires(const P& proto, const typename P::State& s) {
    { proto.output(s) };
};

template <class State>
class Population {
public:
    Population(std::vector<State> agents, std::uint64_t seed)
        : agents_(std::move(agents)), random_(seed), seed_(seed) {
        if (agents_.size() < 2) throw std::invalid_argument("population too small");
    }

    std::size_t size() const noexcept { return agents_.size(); }
    std::span<const State> agents() const noexcept { return agents_; }
    std::span<State> agents() noexcept { return agents_; }
    const State& operator[](std::size_t i) const { return agents_[i]; }
    State& operator[](std::size_t i) { return agents_[i]; }

    std::uint64_t interactions() const noexcept { return interactions_; }
    double parallel_time() const noexcept {
        return static_cast<double>(interactions_) / static_cast<double>(agents_.size());
    }
    std::uint64_t seed() const noexcept { return seed_; }
    Random& random() noexcept { return random_; }

    void count_interaction() noexcept { ++interactions_; }

private:
    std::vector<State> agents_;
    std::uint64_t interactions_ = 0;
    Random random_;
    std::uint64_t seed_;
};

template <ProtocolSpec P>
Population<typename P::State> new_population(const P& proto,
                                             std::span<const typename P::Input> inputs,
                                             std::uint64_t seed) {
    if (inputs.size() < 2) throw std::invalid_argument("population too small");
    std::vector<typename P::State> agents;
    agents.reserve(inputs.size());
    for (const auto& input : inputs) agents.push_back(proto.init(input));
    return Population<typename P::State>(std::move(agents), seed);
}

struct InteractionRecord {
    std::uint64_t index = 0;  // 1-based count of this interaction
    std::size_t first = 0;
    std::size_t second = 0;
    bool changed = false;
};

/// Full before/after view of one interaction, handed to observers that ask for it.
template <class State>
struct Interaction {
    InteractionRecord record;
    State before_first, before_second;
    State after_first, after_second;
};

/// Draws an ordered pair of distinct agents uniformly. The unordered pair is
/// uniform over all n(n-1)/2 pairs and the orientation is a fair coin.
template <class State>
std::pair<std::size_t, std::size_t> draw_pair(Population<State>& pop) {
    const auto n = pop.size();
    const auto first = static_cast<std::size_t>(pop.random().below(n));
    auto second = static_cast<std::size_t>(pop.random().below(n - 1));
    if (second >= first) ++second;
    return {first, second};
}

template <ProtocolSpec P>
InteractionRecord step(Population<typename P::State>& pop, const P& proto) {
    auto [i, j] = draw_pair(pop);
    auto& a = pop[i];
    auto& b = pop[j];
    const auto old_a = a;
    const auto old_b = b;
    proto.interact(a, b, pop.random());
    pop.count_interaction();
    return {pop.interactions(), i, j, !(a == old_a && b == old_b)};
}

// ---------------------------------------------------------------------------
// Silence

/// True iff every ordered pair of present states is a null interaction.
/// Self pairs are only considered for states held by at least two agents.
template <ProtocolSpec P>
bool is_silent(std::span<const typename P::State> agents, const P& proto) {
    using State = typename P::State;
    // Cheap refutation first: a handful of random pairs usually exposes activity.
    if (agents.size() >= 2) {
        std::minstd_rand probe(static_cast<std::uint32_t>(agents.size() * 2654435761u));
        std::uniform_int_distribution<std::size_t> pick(0, agents.size() - 1);
        for (int t = 0; t < 64; ++t) {
            const auto i = pick(probe);
            const auto j = pick(probe);
            if (i != j && !proto.is_null(agents[i], agents[j])) return false;
        }
    }
    std::unordered_map<State, std::uint64_t> counts;
    for (const auto& s : agents) ++counts[s];
    std::vector<std::pair<State, std::uint64_t>> distinct(counts.begin(), counts.end());
    std::sort(distinct.begin(), distinct.end(),
              [](const auto& x, const auto& y) { return x.second > y.second; });
    for (std::size_t x = 0; x < distinct.size(); ++x) {
        const auto& [sx, cx] = distinct[x];
        if (cx >= 2 && !proto.is_null(sx, sx)) return false;
        for (std::size_t y = x + 1; y < distinct.size(); ++y) {
            const auto& sy = distinct[y].first;
            if (!proto.is_null(sx, sy) || !proto.is_null(sy, sx)) return false;
        }
    }
    return true;
}

template <ProtocolSpec P>
bool is_silent(const Population<typename P::State>& pop, const P& proto) {
    return is_silent<P>(pop.agents(), proto);
}

// ---------------------------------------------------------------------------
// Running

struct Silent {};
struct MaxParallelTime {
    double time = 0.0;
};
struct MaxInteractions {
    std::uint64_t count = 0;
};
template <class State>
struct Predicate {
    std::string name;
    std::function<bool(const Population<State>&)> holds;
};

template <class State>
using StopCondition = std::variant<Silent, MaxParallelTime, MaxInteractions, Predicate<State>>;

enum class StopKind { Silent, MaxParallelTime, MaxInteractions, Predicate, Observer };

inline const char* to_string(StopKind kind) {
    switch (kind) {
    case StopKind::Silent: return "silent";
    case StopKind::MaxParallelTime: return "max_parallel_time";
    case StopKind::MaxInteractions: return "max_interactions";
    case StopKind::Predicate: return "predicate";
    case StopKind::Observer: return "observer";
    }
    return "unknown";
}

struct RunOptions {
    /// Parallel time between silence / predicate checks.
    double check_interval = 0.25;
};

template <class State>
struct RunResult {
    Population<State> population;
    std::uint64_t interactions = 0;
    double parallel_time = 0.0;
    StopKind stopped_by = StopKind::MaxInteractions;
    bool silent = false;
    /// Parallel time of the last output change; present only for silent runs.
    std::optional<double> stabilization_time;
};

/// Observer that ignores everything.
struct NullObserver {};

namespace detail {

template <class Obs, class State>
concept WantsInteractions = requires(Obs& obs, const Interaction<State>& rec) {
    obs.on_interaction(rec);
};
template <class Obs, class State>
concept WantsSteps = requires(Obs& obs, const Population<State>& pop, const InteractionRecord& rec) {
    obs.on_step(pop, rec);
};
template <class Obs, class State>
concept WantsChecks = requires(Obs& obs, const Population<State>& pop) { obs.on_check(pop); };
template <class Obs>
concept CanStop = requires(const Obs& obs) {
    { obs.stop_requested() } -> std::convertible_to<bool>;
};

inline std::uint64_t interactions_for(double parallel_time, std::size_t n) {
    if (parallel_time <= 0.0) return 0;
    const double raw = parallel_time * static_cast<double>(n);
    return static_cast<std::uint64_t>(raw + 0.999999);
}

}  // namespace detail

/// Runs until `stop` holds or `guard` interactions have been used. Silence and
/// predicate stops are evaluated every `options.check_interval` parallel time.
template <ProtocolSpec P, class Observer = NullObserver>
RunResult<typename P::State> run_until(Population<typename P::State> pop, const P& proto,
                                       const StopCondition<typename P::State>& stop,
                                       MaxInteractions guard, const RunOptions& options = {},
                                       Observer&& observer = {}) {
    using State = typename P::State;
    using Obs = std::remove_cvref_t<Observer>;
    if (guard.count == 0) throw std::invalid_argument("guard must allow at least one interaction");
    if (const auto* t = std::get_if<MaxParallelTime>(&stop); t && t->time < 0)
        throw std::invalid_argument("MaxParallelTime must be nonnegative");
    if (const auto* k = std::get_if<MaxInteractions>(&stop); k && k->count == 0)
        throw std::invalid_argument("MaxInteractions must be positive");

    const std::size_t n = pop.size();
    const std::uint64_t start = pop.interactions();
    const std::uint64_t check_every = std::max<std::uint64_t>(1, detail::interactions_for(options.check_interval, n));

    std::uint64_t hard_stop = start + guard.count;
    StopKind hard_kind = StopKind::MaxInteractions;
    if (const auto* t = std::get_if<MaxParallelTime>(&stop)) {
        const auto target = detail::interactions_for(t->time, n);
        if (target <= hard_stop) {
            hard_stop = std::max(target, start);
            hard_kind = StopKind::MaxParallelTime;
        }
    } else if (const auto* k = std::get_if<MaxInteractions>(&stop)) {
        if (start + k->count <= hard_stop) {
            hard_stop = start + k->count;
            hard_kind = StopKind::MaxInteractions;
        }
    }
    const bool check_silence = std::holds_alternative<Silent>(stop);
    const auto* predicate = std::get_if<Predicate<State>>(&stop);

    std::optional<std::uint64_t> last_output_change;
    StopKind stopped_by = hard_kind;
    bool stopped_early = false;
    std::uint64_t next_check = start + check_every;

    auto periodic_stop = [&]() -> bool {
        if constexpr (detail::WantsChecks<Obs, State>) observer.on_check(pop);
        if (check_silence && is_silent(pop, proto)) {
            stopped_by = StopKind::Silent;
            return true;
        }
        if (predicate && predicate->holds(pop)) {
            stopped_by = StopKind::Predicate;
            return true;
        }
        return false;
    };

    if (periodic_stop()) stopped_early = true;

    while (!stopped_early && pop.interactions() < hard_stop) {
        auto [i, j] = draw_pair(pop);
        State& a = pop[i];
        State& b = pop[j];
        const State old_a = a;
        const State old_b = b;
        proto.interact(a, b, pop.random());
        pop.count_interaction();
        const InteractionRecord rec{pop.interactions(), i, j, !(a == old_a && b == old_b)};
        if constexpr (HasOutput<P>) {
            if (rec.changed && (!(proto.output(a) == proto.output(old_a)) ||
                                !(proto.output(b) == proto.output(old_b))))
                last_output_change = rec.index;
        }
        if constexpr (detail::WantsInteractions<Obs, State>)
            observer.on_interaction(Interaction<State>{rec, old_a, old_b, a, b});
        if constexpr (detail::WantsSteps<Obs, State>) observer.on_step(pop, rec);
        if constexpr (detail::CanStop<Obs>) {
            if (observer.stop_requested()) {
                stopped_by = StopKind::Observer;
                break;
            }
        }
        if (pop.interactions() >= next_check) {
            next_check += check_every;
            if (periodic_stop()) break;
        }
    }

    const auto used = pop.interactions();
    const double elapsed = pop.parallel_time();
    RunResult<State> result{std::move(pop), used, elapsed, stopped_by, false, std::nullopt};
    result.silent = stopped_by == StopKind::Silent || is_silent(result.population, proto);
    if (result.silent) {
        const auto idx = last_output_change.value_or(0);
        result.stabilization_time = static_cast<double>(idx) / static_cast<double>(n);
    }
    return result;
}

/// Parallel-time based guard.
inline MaxInteractions guard_for_time(double parallel_time, std::size_t n) {
    return MaxInteractions{std::max<std::uint64_t>(1, detail::interactions_for(parallel_time, n))};
}

}  // namespace popsim
