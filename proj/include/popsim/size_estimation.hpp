#pragma once

// Stable floor(log2 n) by binary merging: equal leaders merge upward and
// leave a follower that spreads the largest level seen.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "popsim/engine.hpp"

namespace popsim {

enum class SizeKind : std::uint8_t { L = 0, F = 1 };

struct SizeEstState {
    SizeKind kind = SizeKind::L;
    std::uint8_t level = 0;
    friend bool operator==(const SizeEstState&, const SizeEstState&) = default;
};

std::string describe(const SizeEstState& s);

class SizeEstimationProtocol {
public:
    using State = SizeEstState;
    using Input = std::uint8_t;  // ignored, every agent starts as L_0

    State init(Input = 0) const { return {}; }
    void interact(State& u, State& v, Coin&) const;
    bool is_null(const State& u, const State& v) const;
    std::pair<State, State> transition(State u, State v) const;
};

struct SizeEstReport {
    std::uint64_t n = 0;
    std::vector<int> l_levels;         // sorted ascending
    std::optional<int> f_value;        // common follower value, if all agree
    std::optional<double> silence_time;
    std::uint64_t interactions = 0;
    std::uint64_t conservation_violations = 0;
    bool ok = false;
    std::vector<std::string> problems;
};

/// Checks a final population: leader levels are the 1-bits of n (one agent
/// each) and every follower holds floor(log2 n).
SizeEstReport sizeest_check(std::span<const SizeEstState> agents, std::uint64_t n);

/// Sum over leaders of 2^level.
std::uint64_t leader_mass(std::span<const SizeEstState> agents);

/// Runs from all-L_0 until silent (detected exactly) or the guard, checking
/// that leader mass stays n at every interaction.
SizeEstReport run_size_estimation(std::uint64_t n, std::uint64_t seed, double guard_time);

int floor_log2(std::uint64_t n);

}  // namespace popsim

template <>
struct std::hash<popsim::SizeEstState> {
    std::size_t operator()(const popsim::SizeEstState& s) const noexcept {
        return static_cast<std::size_t>(s.level) * 2 + static_cast<std::size_t>(s.kind);
    }
};
