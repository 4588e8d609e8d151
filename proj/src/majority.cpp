#include "popsim/majority.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace popsim {

const char* to_string(Symbol s) {
    switch (s) {
    case Symbol::A: return "A";
    case Symbol::B: return "B";
    case Symbol::T: return "T";
    }
    return "?";
}

Symbol symbol_from_string(const std::string& text) {
    if (text == "A") return Symbol::A;
    if (text == "B") return Symbol::B;
    if (text == "T") return Symbol::T;
    throw std::invalid_argument("unknown symbol '" + text + "'");
}

const char* to_string(Role r) {
    switch (r) {
    case Role::MainClockReserve: return "Role_MCR";
    case Role::ClockReserve: return "Role_CR";
    case Role::Main: return "Main";
    case Role::Clock: return "Clock";
    case Role::Reserve: return "Reserve";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Parameters

int MajorityParams::default_depth(std::uint64_t n) {
    int depth = 0;
    while (depth < 64 && (std::uint64_t{1} << depth) < n) ++depth;
    return std::max(depth, 1);
}

MajorityParams MajorityParams::paper_sim(std::uint64_t n) {
    MajorityParams p;
    p.n = n;
    p.depth = default_depth(n);
    p.minutes_per_hour = 2;
    p.drip_probability = 0.1;
    return p;
}

MajorityParams MajorityParams::paper_proof(std::uint64_t n) {
    MajorityParams p = paper_sim(n);
    p.minutes_per_hour = 45;
    p.drip_probability = 1.0;
    return p;
}

MajorityParams MajorityParams::preset(const std::string& name, std::uint64_t n) {
    if (name == "paper-sim") return paper_sim(n);
    if (name == "paper-proof") return paper_proof(n);
    throw std::invalid_argument("unknown preset '" + name + "'");
}

int MajorityParams::counter_start(int phase) const {
    const double log2n = std::log2(static_cast<double>(n));
    const double raw = std::ceil(counter_mult.at(static_cast<std::size_t>(phase)) * log2n);
    return std::max(1, static_cast<int>(raw));
}

void MajorityParams::validate() const {
    if (n < 2) throw std::invalid_argument("population too small");
    if (depth < 1 || depth > 60) throw std::invalid_argument("L must be in [1, 60]");
    if (minutes_per_hour < 1) throw std::invalid_argument("k must be >= 1");
    if (!(drip_probability > 0.0 && drip_probability <= 1.0))
        throw std::invalid_argument("p must be in (0, 1]");
    if (static_cast<long>(minutes_per_hour) * depth > 65535)
        throw std::invalid_argument("k*L exceeds the minute range");
    for (double c : counter_mult)
        if (!(c > 0.0)) throw std::invalid_argument("counter multipliers must be positive");
    for (int phase = 0; phase < 9; ++phase)
        if (counter_start(phase) > 65535) throw std::invalid_argument("counter exceeds its range");
}

std::string describe(const AgentState& s) {
    std::ostringstream out;
    out << "{phase " << int(s.phase) << ", " << to_string(s.role) << ", in " << to_string(s.input)
        << ", out " << to_string(s.output) << ", bias " << int(s.bias) << ", opinion "
        << int(s.opinion) << ", exp " << int(s.exponent) << ", hour " << int(s.hour)
        << ", minute " << s.minute << ", counter " << s.counter << ", sample " << int(s.sample)
        << ", full " << s.full << ", opinions " << int(s.opinions) << ", active " << s.active
        << ", assigned " << s.assigned << "}";
    return out.str();
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

int sign(int x) { return (x > 0) - (x < 0); }

int floor_half(int x) { return x >= 0 ? x / 2 : -((-x + 1) / 2); }

void set_bias(AgentState& a, int bias) {
    a.bias = static_cast<std::int8_t>(bias);
    a.opinion = static_cast<std::int8_t>(sign(bias));
}

// Unbiased agents carry no exponent and no fullness.
void clear_mass(AgentState& a) {
    a.opinion = 0;
    a.exponent = 0;
    a.full = false;
}

bool biased_main(const AgentState& a) { return a.role == Role::Main && a.opinion != 0; }

// Applies f(i, j) to whichever orientation satisfies `which(i, j)`, at most once.
template <class Pred, class Body>
bool either_way(AgentState& u, AgentState& v, Pred which, Body body) {
    if (which(u, v)) {
        body(u, v);
        return true;
    }
    if (which(v, u)) {
        body(v, u);
        return true;
    }
    return false;
}

}  // namespace

MajorityProtocol::MajorityProtocol(MajorityParams params) : params_(std::move(params)) {
    params_.validate();
}

AgentState MajorityProtocol::init(Symbol input) const {
    if (input == Symbol::T) throw std::invalid_argument("input must be A or B");
    AgentState s;
    s.input = input;
    s.output = input;
    s.phase = 0;
    s.role = Role::MainClockReserve;
    s.assigned = false;
    set_bias(s, input == Symbol::A ? +1 : -1);
    return s;
}

void MajorityProtocol::advance(AgentState& a) const { enter_phase(a, a.phase + 1); }

void MajorityProtocol::enter_phase(AgentState& a, int phase) const {
    a.phase = static_cast<std::uint8_t>(phase);
    switch (phase) {
    case 1:
        if (a.role == Role::MainClockReserve) {
            enter_phase(a, kBackupPhase);  // error: bias never donated
            return;
        }
        if (a.role == Role::ClockReserve) a.role = Role::Reserve;
        a.assigned = false;
        a.counter = a.role == Role::Clock ? static_cast<std::uint16_t>(params_.counter_start(1)) : 0;
        break;
    case 2:
        if (std::abs(a.bias) > 1) {
            enter_phase(a, kBackupPhase);  // error: averaging did not settle
            return;
        }
        a.counter = 0;
        a.opinions = opinion_bit(a.opinion);
        break;
    case 3:
        a.opinions = 0;
        a.bias = 0;  // mass now carried by opinion * 2^exponent
        a.exponent = 0;
        a.hour = 0;
        a.minute = 0;
        a.counter = a.role == Role::Clock ? static_cast<std::uint16_t>(params_.counter_start(3)) : 0;
        break;
    case 4:
        a.output = Symbol::T;
        a.hour = 0;
        a.minute = 0;
        a.counter = 0;
        break;
    case 5:
        if (a.role == Role::Reserve) a.sample = kNoSample;
        a.counter = a.role == Role::Clock ? static_cast<std::uint16_t>(params_.counter_start(5)) : 0;
        break;
    case 6:
        a.counter = a.role == Role::Clock ? static_cast<std::uint16_t>(params_.counter_start(6)) : 0;
        break;
    case 7:
        a.sample = kNoSample;
        a.counter = a.role == Role::Clock ? static_cast<std::uint16_t>(params_.counter_start(7)) : 0;
        break;
    case 8:
        a.full = false;
        a.counter = a.role == Role::Clock ? static_cast<std::uint16_t>(params_.counter_start(8)) : 0;
        break;
    case 9:
        a.counter = 0;
        a.opinions = opinion_bit(a.opinion);
        break;
    case kBackupPhase: {
        const Symbol input = a.input;
        const Role role = a.role;
        a = AgentState{};
        a.input = input;
        a.role = role;
        a.phase = kBackupPhase;
        a.output = input;
        a.active = true;
        break;
    }
    default:
        throw std::logic_error("no phase " + std::to_string(phase));
    }
}

void MajorityProtocol::count_down(AgentState& c) const {
    if (c.counter > 0) --c.counter;
    if (c.counter == 0) advance(c);
}

void MajorityProtocol::synchronize(AgentState& u, AgentState& v) const {
    // An Init may escape to the backup phase, overshooting the target; the
    // loop then lets the other agent catch up.
    while (u.phase != v.phase) {
        AgentState& lagging = u.phase < v.phase ? u : v;
        const int target = std::max(u.phase, v.phase);
        while (lagging.phase < target) advance(lagging);
    }
}

void MajorityProtocol::interact(AgentState& u, AgentState& v, Coin& coin) const {
    synchronize(u, v);
    switch (u.phase) {
    case 0: initialize_roles(u, v); break;
    case 1: discrete_averaging(u, v); break;
    case 2: consensus(u, v); break;
    case 3: rational_averaging(u, v, coin); break;
    case 4: detect_tie(u, v); break;
    case 5: reserve_sample(u, v); break;
    case 6: reserve_split(u, v); break;
    case 7: high_minority_elimination(u, v); break;
    case 8: low_minority_elimination(u, v); break;
    case 9: consensus(u, v); break;
    case kBackupPhase: backup_interact(u.output, u.active, v.output, v.active); break;
    default: throw std::logic_error("agent in unknown phase");
    }
}

std::pair<AgentState, AgentState> MajorityProtocol::transition(AgentState u, AgentState v,
                                                               Coin& coin) const {
    interact(u, v, coin);
    return {u, v};
}

bool MajorityProtocol::is_null(const AgentState& u, const AgentState& v) const {
    AgentState a = u;
    AgentState b = v;
    AlwaysCoin coin;
    interact(a, b, coin);
    return a == u && b == v;
}

void MajorityProtocol::count_clocks(AgentState& u, AgentState& v) const {
    const bool u_clock = u.role == Role::Clock;
    const bool v_clock = v.role == Role::Clock;
    if (u_clock) count_down(u);
    if (v_clock) count_down(v);
}

// Phase 0: split into Main (~1/2), Clock (~1/4) and Reserve (~1/4); every
// non-Main agent hands its input bias to a Main agent.
void MajorityProtocol::initialize_roles(AgentState& u, AgentState& v) const {
    using enum Role;
    if (u.role == MainClockReserve && v.role == MainClockReserve) {
        u.role = Main;
        set_bias(u, u.bias + v.bias);
        set_bias(v, 0);
        v.role = ClockReserve;
        return;
    }
    const bool fired = either_way(
        u, v,
        [](const AgentState& i, const AgentState& j) {
            return i.role == MainClockReserve && j.role == Main && !j.assigned;
        },
        [](AgentState& i, AgentState& j) {
            j.assigned = true;
            set_bias(j, j.bias + i.bias);
            set_bias(i, 0);
            i.role = ClockReserve;
        });
    if (fired) return;
    const bool assigned_main = either_way(
        u, v,
        [](const AgentState& i, const AgentState& j) {
            return i.role == MainClockReserve && j.role != Main && j.role != MainClockReserve &&
                   !j.assigned;
        },
        [](AgentState& i, AgentState& j) {
            j.assigned = true;
            i.role = Main;
        });
    if (assigned_main) return;
    if (u.role == ClockReserve && v.role == ClockReserve) {
        u.role = Clock;
        u.counter = static_cast<std::uint16_t>(params_.counter_start(0));
        v.role = Reserve;
        return;
    }
    if (u.role == Clock && v.role == Clock) {
        count_down(u);
        count_down(v);
    }
}

// Phase 1: integer averaging between Main agents.
void MajorityProtocol::discrete_averaging(AgentState& u, AgentState& v) const {
    if (u.role == Role::Main && v.role == Role::Main) {
        const int sum = u.bias + v.bias;
        set_bias(u, floor_half(sum));
        set_bias(v, sum - floor_half(sum));
    }
    count_clocks(u, v);
}

// Phases 2 and 9: spread the set of opinions seen; both signs present means
// there is no consensus yet.
void MajorityProtocol::consensus(AgentState& u, AgentState& v) const {
    const std::uint8_t seen = u.opinions | v.opinions;
    u.opinions = seen;
    v.opinions = seen;
    const bool plus = seen & opinion_bit(+1);
    const bool minus = seen & opinion_bit(-1);
    if (plus && minus) {
        advance(u);
        advance(v);
    } else if (plus) {
        u.output = v.output = Symbol::A;
    } else if (minus) {
        u.output = v.output = Symbol::B;
    } else if (seen == opinion_bit(0)) {
        u.output = v.output = Symbol::T;
    }
}

// Phase 3: clock (epidemic + drip), hour propagation to unbiased Main agents,
// cancel and split reactions between Main agents.
void MajorityProtocol::rational_averaging(AgentState& u, AgentState& v, Coin& coin) const {
    const int top = params_.max_minute();
    if (u.role == Role::Clock && v.role == Role::Clock) {
        if (u.minute != v.minute) {
            u.minute = v.minute = std::max(u.minute, v.minute);
        } else if (u.minute < top) {
            const double p = params_.drip_probability;
            if (p >= 1.0 || coin.flip(p)) ++u.minute;
        } else {
            count_down(u);
            count_down(v);
        }
    }
    const int k = params_.minutes_per_hour;
    const bool hour_update = either_way(
        u, v,
        [](const AgentState& m, const AgentState& c) {
            return m.role == Role::Main && m.opinion == 0 && c.role == Role::Clock;
        },
        [k](AgentState& m, AgentState& c) {
            m.hour = static_cast<std::uint8_t>(std::max<int>(m.hour, c.minute / k));
        });
    if (hour_update || u.role != Role::Main || v.role != Role::Main) return;

    if (u.opinion * v.opinion == -1 && u.exponent == v.exponent) {
        const auto h = static_cast<std::uint8_t>(-u.exponent);
        clear_mass(u);
        clear_mass(v);
        u.hour = v.hour = h;
    }
    either_way(
        u, v,
        [](const AgentState& t, const AgentState& i) {
            return t.opinion == 0 && i.opinion != 0 && t.hour > -i.exponent;
        },
        [](AgentState& t, AgentState& i) {
            t.opinion = i.opinion;
            i.exponent = static_cast<std::int8_t>(i.exponent - 1);
            t.exponent = i.exponent;
            t.hour = 0;
        });
}

// Phase 4: any mass above the smallest unit ends the tie check.
void MajorityProtocol::detect_tie(AgentState& u, AgentState& v) const {
    const int floor_exponent = -params_.depth;
    const auto heavy = [floor_exponent](const AgentState& m) {
        return m.opinion != 0 && m.exponent > floor_exponent;
    };
    if (heavy(u) || heavy(v)) {
        advance(u);
        advance(v);
    }
}

// Phase 5: each Reserve remembers the exponent of the first biased Main it meets.
void MajorityProtocol::reserve_sample(AgentState& u, AgentState& v) const {
    either_way(
        u, v,
        [](const AgentState& r, const AgentState& m) {
            return r.role == Role::Reserve && biased_main(m);
        },
        [](AgentState& r, AgentState& m) {
            if (r.sample == kNoSample) r.sample = m.exponent;
        });
    count_clocks(u, v);
}

// Phase 6: a Reserve splits any biased agent above its sampled exponent.
void MajorityProtocol::reserve_split(AgentState& u, AgentState& v) const {
    either_way(
        u, v,
        [](const AgentState& r, const AgentState& m) {
            return r.role == Role::Reserve && biased_main(m);
        },
        [](AgentState& r, AgentState& m) {
            if (r.sample != kNoSample && r.sample < m.exponent) {
                r.role = Role::Main;
                r.opinion = m.opinion;
                r.sample = kNoSample;
                m.exponent = static_cast<std::int8_t>(m.exponent - 1);
                r.exponent = m.exponent;
            }
        });
    count_clocks(u, v);
}

// Phase 7: cancel opposite opinions whose exponents differ by at most two.
void MajorityProtocol::high_minority_elimination(AgentState& u, AgentState& v) const {
    if (u.role == Role::Main && v.role == Role::Main && u.opinion * v.opinion == -1) {
        if (u.exponent == v.exponent) {
            clear_mass(u);
            clear_mass(v);
        } else {
            const bool gap1 = either_way(
                u, v,
                [](const AgentState& i, const AgentState& j) { return i.exponent == j.exponent + 1; },
                [](AgentState& i, AgentState& j) {
                    // 2^e - 2^(e-1) = 2^(e-1)
                    i.exponent = static_cast<std::int8_t>(i.exponent - 1);
                    clear_mass(j);
                });
            if (!gap1) {
                either_way(
                    u, v,
                    [](const AgentState& i, const AgentState& j) { return i.exponent == j.exponent + 2; },
                    [](AgentState& i, AgentState& j) {
                        // 2^e - 2^(e-2) = 2^(e-1) + 2^(e-2)
                        const int e = i.exponent;
                        j.opinion = i.opinion;
                        i.exponent = static_cast<std::int8_t>(e - 1);
                        j.exponent = static_cast<std::int8_t>(e - 2);
                    });
            }
        }
    }
    count_clocks(u, v);
}

// Phase 8: a larger-exponent agent absorbs one opposite smaller-exponent agent.
void MajorityProtocol::low_minority_elimination(AgentState& u, AgentState& v) const {
    if (u.role == Role::Main && v.role == Role::Main && u.opinion * v.opinion == -1) {
        either_way(
            u, v,
            [](const AgentState& i, const AgentState& j) { return i.exponent > j.exponent && !i.full; },
            [](AgentState& i, AgentState& j) {
                i.full = true;
                clear_mass(j);
            });
    }
    count_clocks(u, v);
}

// ---------------------------------------------------------------------------
// Stable backup

void backup_interact(Symbol& u_output, bool& u_active, Symbol& v_output, bool& v_active) {
    const auto decided = [](Symbol s) { return s != Symbol::T; };
    if (u_active && v_active) {
        if (decided(u_output) && decided(v_output) && u_output != v_output) {
            u_output = v_output = Symbol::T;
        } else if (decided(u_output) && v_output == Symbol::T) {
            v_output = u_output;
            v_active = false;
        } else if (decided(v_output) && u_output == Symbol::T) {
            u_output = v_output;
            u_active = false;
        }
    }
    if (u_active && !v_active) {
        v_output = u_output;
    } else if (v_active && !u_active) {
        u_output = v_output;
    }
}

Symbol exact_majority_oracle(std::uint64_t count_a, std::uint64_t count_b) {
    if (count_a > count_b) return Symbol::A;
    if (count_b > count_a) return Symbol::B;
    return Symbol::T;
}

std::vector<Symbol> inputs_for_gap(std::uint64_t n, std::int64_t gap) {
    const auto magnitude = static_cast<std::uint64_t>(gap < 0 ? -gap : gap);
    if (magnitude > n) throw std::invalid_argument("|gap| must not exceed n");
    if ((n + magnitude) % 2 != 0) throw std::invalid_argument("n + gap must be even");
    const auto count_a = static_cast<std::uint64_t>((static_cast<std::int64_t>(n) + gap) / 2);
    std::vector<Symbol> inputs(n, Symbol::B);
    std::fill_n(inputs.begin(), count_a, Symbol::A);
    return inputs;
}

std::uint64_t state_budget(const MajorityParams& params) {
    const double c_max = *std::max_element(params.counter_mult.begin(), params.counter_mult.end());
    const auto constant =
        static_cast<std::uint64_t>(6 * (params.minutes_per_hour + 2 * std::ceil(c_max) + 8));
    return constant * static_cast<std::uint64_t>(MajorityParams::default_depth(params.n));
}

}  // namespace popsim
