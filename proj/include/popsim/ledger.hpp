#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popsim/engine.hpp"
#include "popsim/majority.hpp"

namespace popsim {

/// Exact per-agent mass of a majority run, in units of 2^-L.
///
/// The transition only represents a full agent's mass to within a factor of
/// two, so the ledger carries the exact value itself: a consumer takes over
/// the consumed agent's exact mass. Once an agent reaches the backup phase
/// masses stop being meaningful and the ledger freezes.
class MassLedger {
public:
    struct Violation {
        std::uint64_t interaction = 0;
        std::string what;
    };

    MassLedger(std::span<const AgentState> agents, int depth, std::int64_t gap);

    /// Mass implied by a non-full state, in units of 2^-L.
    static std::int64_t represented_mass(const AgentState& s, int depth);

    void apply(const Interaction<AgentState>& rec);
    void on_interaction(const Interaction<AgentState>& rec) { apply(rec); }

    std::int64_t mass(std::size_t agent) const { return masses_.at(agent); }
    /// Sum of all masses divided by 2^L, exact when it is an integer.
    __int128 total_units() const noexcept { return total_; }
    __int128 expected_units() const noexcept { return expected_; }
    bool frozen() const noexcept { return frozen_; }
    std::uint64_t checked() const noexcept { return checked_; }
    const std::vector<Violation>& violations() const noexcept { return violations_; }

    /// Full re-summation; agrees with the running total unless the ledger is corrupt.
    __int128 recount() const;

private:
    void fail(std::uint64_t interaction, std::string what);

    int depth_;
    std::vector<std::int64_t> masses_;
    __int128 total_ = 0;
    __int128 expected_ = 0;
    bool frozen_ = false;
    std::uint64_t checked_ = 0;
    std::vector<Violation> violations_;
};

}  // namespace popsim
