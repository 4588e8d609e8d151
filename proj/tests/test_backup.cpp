#include <doctest.h>

#include <map>
#include <queue>
#include <set>

#include "popsim/majority.hpp"
#include "popsim/metrics.hpp"

using namespace popsim;

namespace {

// Configuration as counts over the six (output, active) states, ignoring input.
using Config = std::array<int, 6>;

int index_of(Symbol out, bool active) { return static_cast<int>(out) * 2 + (active ? 1 : 0); }
Symbol out_of(int idx) { return static_cast<Symbol>(idx / 2); }
bool active_of(int idx) { return idx % 2 == 1; }

std::vector<Config> successors(const Config& c) {
    std::vector<Config> out;
    for (int x = 0; x < 6; ++x) {
        for (int y = 0; y < 6; ++y) {
            if (c[x] == 0 || c[y] == 0 || (x == y && c[x] < 2)) continue;
            Symbol uo = out_of(x), vo = out_of(y);
            bool ua = active_of(x), va = active_of(y);
            backup_interact(uo, ua, vo, va);
            Config next = c;
            --next[x];
            --next[y];
            ++next[index_of(uo, ua)];
            ++next[index_of(vo, va)];
            if (next != c) out.push_back(next);
        }
    }
    return out;
}

struct Reach {
    std::set<Config> states;
    std::map<Config, std::vector<Config>> edges;
};

Reach explore(const Config& start) {
    Reach r;
    std::queue<Config> todo;
    todo.push(start);
    r.states.insert(start);
    while (!todo.empty()) {
        const auto c = todo.front();
        todo.pop();
        auto next = successors(c);
        r.edges[c] = next;
        for (const auto& s : next)
            if (r.states.insert(s).second) todo.push(s);
    }
    return r;
}

bool unanimous(const Config& c, Symbol want) {
    for (int i = 0; i < 6; ++i)
        if (c[i] > 0 && out_of(i) != want) return false;
    return true;
}

}  // namespace

TEST_SUITE("backup") {

TEST_CASE("brute-force reachability: stable for every split with n <= 8") {
    // Stable computation: every silent reachable configuration is unanimous
    // on the majority, and every reachable configuration can still reach one.
    for (int n = 2; n <= 8; ++n) {
        for (int a = 0; a <= n; ++a) {
            const int b = n - a;
            const Symbol want = exact_majority_oracle(a, b);
            Config start{};
            start[index_of(Symbol::A, true)] = a;
            start[index_of(Symbol::B, true)] = b;
            const auto reach = explore(start);
            std::set<Config> good;
            for (const auto& c : reach.states)
                if (reach.edges.at(c).empty()) {
                    CAPTURE(n);
                    CAPTURE(a);
                    CHECK(unanimous(c, want));
                    good.insert(c);
                }
            // Backward closure of the silent set.
            bool grew = true;
            while (grew) {
                grew = false;
                for (const auto& c : reach.states) {
                    if (good.count(c)) continue;
                    for (const auto& s : reach.edges.at(c))
                        if (good.count(s)) {
                            good.insert(c);
                            grew = true;
                            break;
                        }
                }
            }
            CHECK(good.size() == reach.states.size());
        }
    }
}

TEST_CASE("seeded runs over every split with n <= 8") {
    for (int n = 2; n <= 8; ++n) {
        for (int a = 0; a <= n; ++a) {
            std::vector<Symbol> inputs(static_cast<std::size_t>(a), Symbol::A);
            inputs.resize(static_cast<std::size_t>(n), Symbol::B);
            for (std::uint64_t seed = 1; seed <= 50; ++seed) {
                const auto r = run_backup(inputs, seed, 1e6);
                CAPTURE(n);
                CAPTURE(a);
                CAPTURE(seed);
                REQUIRE(r.silent);
                CHECK(r.correct);
            }
        }
    }
}

TEST_CASE("AABB ends on T") {
    const std::vector<Symbol> inputs{Symbol::A, Symbol::A, Symbol::B, Symbol::B};
    const auto r = run_backup(inputs, 3, 1e6);
    REQUIRE(r.silent);
    REQUIRE(r.output);
    CHECK(*r.output == Symbol::T);
}

TEST_CASE("standalone protocol matches the phase 10 body") {
    MajorityProtocol majority(MajorityParams::paper_sim(100));
    BackupProtocol backup;
    AlwaysCoin coin;
    for (int x = 0; x < 6; ++x) {
        for (int y = 0; y < 6; ++y) {
            BackupState u{Symbol::A, out_of(x), active_of(x)};
            BackupState v{Symbol::B, out_of(y), active_of(y)};
            auto [bu, bv] = backup.transition(u, v);
            AgentState mu, mv;
            majority.enter_phase(mu, kBackupPhase);
            majority.enter_phase(mv, kBackupPhase);
            mu.output = u.output;
            mu.active = u.active;
            mv.output = v.output;
            mv.active = v.active;
            auto [au, av] = majority.transition(mu, mv, coin);
            CHECK(au.output == bu.output);
            CHECK(au.active == bu.active);
            CHECK(av.output == bv.output);
            CHECK(av.active == bv.active);
        }
    }
}

}  // TEST_SUITE
