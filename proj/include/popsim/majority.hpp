#pragma once

// Exact majority in O(log n) states and O(log n) time: eleven phases driven
// by a leaderless counter, ending in a six-state stable backup.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "popsim/engine.hpp"

namespace popsim {

enum class Symbol : std::uint8_t { A = 0, B = 1, T = 2 };

const char* to_string(Symbol s);
Symbol symbol_from_string(const std::string& text);

enum class Role : std::uint8_t {
    MainClockReserve = 0,  // not yet split
    ClockReserve = 1,      // donated its bias, not yet Clock or Reserve
    Main = 2,
    Clock = 3,
    Reserve = 4,
};

const char* to_string(Role r);

inline constexpr int kPhaseCount = 11;
inline constexpr int kBackupPhase = 10;
inline constexpr std::int8_t kNoSample = 1;  // samples are exponents, always <= 0

struct MajorityParams {
    std::uint64_t n = 2;
    int depth = 1;                   // L, exponents range over -L..0
    int minutes_per_hour = 2;        // k
    double drip_probability = 0.1;   // p
    // Phase 1 gets a longer counter so a linear gap finishes cancelling before phase 2.
    std::array<double, 9> counter_mult{5, 12, 5, 5, 5, 5, 5, 5, 5};

    /// k=2, p=0.1, counters 5 log2 n (12 log2 n in phase 1).
    static MajorityParams paper_sim(std::uint64_t n);
    /// k=45, p=1, same counters.
    static MajorityParams paper_proof(std::uint64_t n);
    static MajorityParams preset(const std::string& name, std::uint64_t n);

    static int default_depth(std::uint64_t n);  // ceil(log2 n)

    int max_minute() const noexcept { return minutes_per_hour * depth; }
    /// Initial counter of a timed phase: ceil(c_phase * log2 n).
    int counter_start(int phase) const;
    void validate() const;
};

struct AgentState {
    std::uint16_t minute = 0;   // Clock, phase 3
    std::uint16_t counter = 0;  // Clock, timed phases
    Symbol input = Symbol::A;
    Symbol output = Symbol::A;
    std::uint8_t phase = 0;
    Role role = Role::MainClockReserve;
    bool assigned = false;       // phase 0
    std::int8_t bias = 0;        // integer bias, phases 0-2
    std::int8_t opinion = 0;     // sign of the bias in every phase
    std::int8_t exponent = 0;    // biased Main, phases 3-9
    std::uint8_t hour = 0;       // unbiased Main, phase 3
    std::int8_t sample = kNoSample;  // Reserve, phases 5-6
    bool full = false;           // phases 8-9
    std::uint8_t opinions = 0;   // phases 2 and 9, bit per opinion {-1,0,+1}
    bool active = false;         // phase 10

    friend bool operator==(const AgentState&, const AgentState&) = default;

    bool is_main() const noexcept { return role == Role::Main; }
    bool is_clock() const noexcept { return role == Role::Clock; }
    bool biased() const noexcept { return opinion != 0; }
};

std::string describe(const AgentState& s);

/// Bit for an opinion value in AgentState::opinions.
constexpr std::uint8_t opinion_bit(int opinion) { return static_cast<std::uint8_t>(1u << (opinion + 1)); }

class MajorityProtocol {
public:
    using State = AgentState;
    using Input = Symbol;

    explicit MajorityProtocol(MajorityParams params);

    const MajorityParams& params() const noexcept { return params_; }

    State init(Symbol input) const;
    void interact(State& u, State& v, Coin& coin) const;
    bool is_null(const State& u, const State& v) const;
    Symbol output(const State& s) const noexcept { return s.output; }

    /// Pure form of interact.
    std::pair<State, State> transition(State u, State v, Coin& coin) const;

    /// Runs the Init block of `phase` on an agent currently in `phase - 1`.
    /// Error escapes jump straight to the backup phase.
    void enter_phase(State& a, int phase) const;
    /// Increments the phase and runs the new phase's Init.
    void advance(State& a) const;
    /// Decrements the counter; at zero the agent moves to the next phase.
    void count_down(State& c) const;

private:
    void synchronize(State& u, State& v) const;
    void initialize_roles(State& u, State& v) const;
    void discrete_averaging(State& u, State& v) const;
    void consensus(State& u, State& v) const;
    void rational_averaging(State& u, State& v, Coin& coin) const;
    void detect_tie(State& u, State& v) const;
    void reserve_sample(State& u, State& v) const;
    void reserve_split(State& u, State& v) const;
    void high_minority_elimination(State& u, State& v) const;
    void low_minority_elimination(State& u, State& v) const;
    void count_clocks(State& u, State& v) const;

    MajorityParams params_;
};

/// Phase-10 rules on the (output, active) fields alone.
void backup_interact(Symbol& u_output, bool& u_active, Symbol& v_output, bool& v_active);

/// The six-state stable backup as a standalone protocol.
struct BackupState {
    Symbol input = Symbol::A;
    Symbol output = Symbol::A;
    bool active = true;
    friend bool operator==(const BackupState&, const BackupState&) = default;
};

class BackupProtocol {
public:
    using State = BackupState;
    using Input = Symbol;

    State init(Symbol input) const { return {input, input, true}; }
    void interact(State& u, State& v, Coin&) const {
        backup_interact(u.output, u.active, v.output, v.active);
    }
    std::pair<State, State> transition(State u, State v) const {
        backup_interact(u.output, u.active, v.output, v.active);
        return {u, v};
    }
    bool is_null(const State& u, const State& v) const {
        auto [a, b] = transition(u, v);
        return a == u && b == v;
    }
    Symbol output(const State& s) const noexcept { return s.output; }
};

Symbol exact_majority_oracle(std::uint64_t count_a, std::uint64_t count_b);

/// Inputs with (n+g)/2 A's followed by (n-g)/2 B's. Throws on parity or range.
std::vector<Symbol> inputs_for_gap(std::uint64_t n, std::int64_t gap);

/// Upper bound used by the state-space audit: distinct states in any one
/// phase stay below C * ceil(log2 n) with C = 6 * (k + 2 * ceil(c_max) + 8).
/// The factor 6 covers the input x output combinations; the sum covers the
/// per-role field ranges (exponent, hour, minute, counter).
std::uint64_t state_budget(const MajorityParams& params);

}  // namespace popsim

template <>
struct std::hash<popsim::AgentState> {
    std::size_t operator()(const popsim::AgentState& s) const noexcept {
        std::uint64_t h = s.minute;
        h = h * 65599u + s.counter;
        h = h * 31u + static_cast<std::uint8_t>(s.input);
        h = h * 31u + static_cast<std::uint8_t>(s.output);
        h = h * 31u + s.phase;
        h = h * 31u + static_cast<std::uint8_t>(s.role);
        h = h * 31u + s.assigned;
        h = h * 31u + static_cast<std::uint8_t>(s.bias);
        h = h * 31u + static_cast<std::uint8_t>(s.opinion);
        h = h * 131u + static_cast<std::uint8_t>(s.exponent);
        h = h * 131u + s.hour;
        h = h * 131u + static_cast<std::uint8_t>(s.sample);
        h = h * 31u + s.full;
        h = h * 31u + s.opinions;
        h = h * 31u + s.active;
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};

template <>
struct std::hash<popsim::BackupState> {
    std::size_t operator()(const popsim::BackupState& s) const noexcept {
        return static_cast<std::size_t>(s.input) * 8 + static_cast<std::size_t>(s.output) * 2 + s.active;
    }
};
