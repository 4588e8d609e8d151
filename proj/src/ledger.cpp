#include "popsim/ledger.hpp"

#include <cstdlib>
#include <stdexcept>

namespace popsim {

MassLedger::MassLedger(std::span<const AgentState> agents, int depth, std::int64_t gap)
    : depth_(depth), masses_(agents.size()) {
    if (depth < 1 || depth > 60) throw std::invalid_argument("ledger depth out of range");
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].full) throw std::invalid_argument("ledger cannot start from a full agent");
        masses_[i] = represented_mass(agents[i], depth);
        total_ += masses_[i];
    }
    expected_ = static_cast<__int128>(gap) << depth;
    if (total_ != expected_) fail(0, "initial masses do not sum to the gap");
}

std::int64_t MassLedger::represented_mass(const AgentState& s, int depth) {
    if (s.phase <= 2) return static_cast<std::int64_t>(s.bias) * (std::int64_t{1} << depth);
    if (s.phase >= kBackupPhase || s.role != Role::Main || s.opinion == 0) return 0;
    return s.opinion * (std::int64_t{1} << (depth + s.exponent));
}

void MassLedger::fail(std::uint64_t interaction, std::string what) {
    if (violations_.size() < 64) violations_.push_back({interaction, std::move(what)});
}

void MassLedger::apply(const Interaction<AgentState>& rec) {
    if (frozen_) return;
    if (rec.after_first.phase >= kBackupPhase || rec.after_second.phase >= kBackupPhase) {
        frozen_ = true;
        return;
    }
    const auto i = rec.record.first;
    const auto j = rec.record.second;
    const std::int64_t old_i = masses_[i];
    const std::int64_t old_j = masses_[j];

    const auto next_mass = [&](const AgentState& before, const AgentState& after,
                               std::int64_t own, std::int64_t other) -> std::int64_t {
        if (after.full && !before.full) return own + other;  // consumption
        if (after.full) return own;
        return represented_mass(after, depth_);
    };
    const std::int64_t new_i = next_mass(rec.before_first, rec.after_first, old_i, old_j);
    const std::int64_t new_j = next_mass(rec.before_second, rec.after_second, old_j, old_i);
    ++checked_;

    if (new_i + new_j != old_i + old_j)
        fail(rec.record.index, "pair mass changed: " + describe(rec.before_first) + " x " +
                                   describe(rec.before_second) + " -> " +
                                   describe(rec.after_first) + " x " + describe(rec.after_second));

    const auto check_full = [&](const AgentState& s, std::int64_t m) {
        if (!s.full) return;
        const std::int64_t hi = std::int64_t{1} << (depth_ + s.exponent);
        const std::int64_t magnitude = std::llabs(m);
        const bool sign_ok = (m > 0 && s.opinion > 0) || (m < 0 && s.opinion < 0);
        if (!sign_ok || 2 * magnitude < hi || magnitude >= hi)
            fail(rec.record.index, "full agent mass " + std::to_string(m) + " outside [2^(e-1), 2^e) for " +
                                       describe(s));
    };
    check_full(rec.after_first, new_i);
    check_full(rec.after_second, new_j);

    masses_[i] = new_i;
    masses_[j] = new_j;
    total_ += (new_i - old_i) + (new_j - old_j);
    if (total_ != expected_) fail(rec.record.index, "ledger total drifted from the gap");
}

__int128 MassLedger::recount() const {
    __int128 sum = 0;
    for (auto m : masses_) sum += m;
    return sum;
}

}  // namespace popsim
