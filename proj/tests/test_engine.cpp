#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "popsim/engine.hpp"
#include "popsim/majority.hpp"
#include "popsim/metrics.hpp"
#include "popsim/size_estimation.hpp"

using namespace popsim;

namespace {

std::vector<Symbol> repeat(int a, int b) {
    std::vector<Symbol> v(static_cast<std::size_t>(a), Symbol::A);
    v.insert(v.end(), static_cast<std::size_t>(b), Symbol::B);
    return v;
}

// Records every ordered pair the scheduler hands out.
struct PairLog {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    void on_step(const Population<BackupState>&, const InteractionRecord& rec) {
        pairs.emplace_back(rec.first, rec.second);
    }
};

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("new_population builds initial states") {
    MajorityProtocol proto(MajorityParams::paper_sim(10));
    const auto inputs = repeat(6, 4);
    auto pop = new_population(proto, std::span<const Symbol>(inputs), 7);
    REQUIRE(pop.size() == 10);
    CHECK(pop.interactions() == 0);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        CHECK(pop[i].phase == 0);
        CHECK(pop[i].role == Role::MainClockReserve);
        CHECK(pop[i].bias == (i < 6 ? 1 : -1));
    }

    const std::vector<Symbol> none;
    CHECK_THROWS_WITH_AS(new_population(proto, std::span<const Symbol>(none), 1), "population too small",
                         std::invalid_argument);
    const std::vector<Symbol> one{Symbol::A};
    CHECK_THROWS_AS(new_population(proto, std::span<const Symbol>(one), 1), std::invalid_argument);

    const std::vector<Symbol> two{Symbol::A, Symbol::B};
    auto backup = new_population(BackupProtocol{}, std::span<const Symbol>(two), 1);
    CHECK(backup[0].active);
    CHECK(backup[1].active);
    CHECK(backup[0].output == Symbol::A);
    CHECK(backup[1].output == Symbol::B);
}

TEST_CASE("two agents always pair with each other") {
    const std::vector<Symbol> two{Symbol::A, Symbol::B};
    auto pop = new_population(BackupProtocol{}, std::span<const Symbol>(two), 3);
    for (int t = 0; t < 100; ++t) {
        auto [i, j] = draw_pair(pop);
        CHECK(std::set<std::size_t>{i, j} == std::set<std::size_t>{0, 1});
    }
}

TEST_CASE("null interactions still count") {
    const std::vector<Symbol> same{Symbol::A, Symbol::A};
    BackupProtocol proto;
    auto pop = new_population(proto, std::span<const Symbol>(same), 3);
    // Active A meets active A: nothing applies.
    const auto rec = step(pop, proto);
    CHECK_FALSE(rec.changed);
    CHECK(pop.interactions() == 1);
    CHECK(rec.index == 1);
}

TEST_CASE("same seed replays the same pair sequence") {
    const auto inputs = repeat(30, 20);
    BackupProtocol proto;
    auto run = [&](std::uint64_t seed) {
        PairLog log;
        auto pop = new_population(proto, std::span<const Symbol>(inputs), seed);
        auto result = run_until(std::move(pop), proto, MaxInteractions{5000}, MaxInteractions{100000}, {}, log);
        return std::make_pair(log.pairs, std::vector<BackupState>(result.population.agents().begin(),
                                                                  result.population.agents().end()));
    };
    const auto first = run(11);
    const auto second = run(11);
    CHECK(first.first == second.first);
    CHECK(first.second == second.second);
    CHECK(first.first != run(12).first);
}

TEST_CASE("pair draws are uniform over unordered pairs") {
    const std::size_t n = 10;
    std::vector<BackupState> agents(n);
    Population<BackupState> pop(agents, 2024);
    const int draws = 1000000;
    std::map<std::pair<std::size_t, std::size_t>, int> counts;
    int swapped = 0;
    for (int t = 0; t < draws; ++t) {
        auto [i, j] = draw_pair(pop);
        REQUIRE(i != j);
        REQUIRE(i < n);
        REQUIRE(j < n);
        swapped += i > j;
        ++counts[{std::min(i, j), std::max(i, j)}];
    }
    REQUIRE(counts.size() == 45);
    const double q = 1.0 / 45.0;
    const double sigma = std::sqrt(draws * q * (1 - q));
    double chi2 = 0;
    for (const auto& [pair, c] : counts) {
        CHECK(std::abs(c - draws * q) < 5 * sigma);
        chi2 += (c - draws * q) * (c - draws * q) / (draws * q);
    }
    // 44 degrees of freedom; 99.9th percentile is about 78.7.
    CHECK(chi2 < 78.7);
    CHECK(std::abs(swapped - draws / 2.0) < 5 * std::sqrt(draws / 4.0));
}

TEST_CASE("parallel time is interactions over n") {
    const auto inputs = repeat(4, 3);
    BackupProtocol proto;
    auto pop = new_population(proto, std::span<const Symbol>(inputs), 5);
    for (int k = 1; k <= 70; ++k) {
        step(pop, proto);
        CHECK(pop.interactions() == static_cast<std::uint64_t>(k));
        CHECK(pop.parallel_time() == static_cast<double>(k) / 7.0);
    }
}

TEST_CASE("backup AABB ends silent on T") {
    const auto inputs = repeat(2, 2);
    BackupProtocol proto;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto pop = new_population(proto, std::span<const Symbol>(inputs), seed);
        auto r = run_until(std::move(pop), proto, Silent{}, MaxInteractions{1000000});
        REQUIRE(r.silent);
        CHECK(r.stopped_by == StopKind::Silent);
        for (const auto& s : r.population.agents()) CHECK(s.output == Symbol::T);
        REQUIRE(r.stabilization_time);
        CHECK(*r.stabilization_time <= r.parallel_time);
    }
}

TEST_CASE("zero parallel time takes no steps") {
    const auto inputs = repeat(3, 2);
    BackupProtocol proto;
    auto pop = new_population(proto, std::span<const Symbol>(inputs), 1);
    auto r = run_until(std::move(pop), proto, MaxParallelTime{0.0}, MaxInteractions{100});
    CHECK(r.interactions == 0);
    CHECK(r.stopped_by == StopKind::MaxParallelTime);
    CHECK_FALSE(r.silent);
}

TEST_CASE("majority n=1000 gap 100 reaches A") {
    MajorityProtocol proto(MajorityParams::paper_sim(1000));
    const auto inputs = inputs_for_gap(1000, 100);
    auto pop = new_population(proto, std::span<const Symbol>(inputs), 1);
    auto r = run_until(std::move(pop), proto, Silent{}, guard_for_time(1e5, 1000));
    REQUIRE(r.silent);
    for (const auto& s : r.population.agents()) CHECK(s.output == Symbol::A);
}

TEST_CASE("guard exhaustion is a result, not an error") {
    const auto inputs = repeat(50, 50);
    BackupProtocol proto;
    auto pop = new_population(proto, std::span<const Symbol>(inputs), 1);
    auto r = run_until(std::move(pop), proto, Silent{}, MaxInteractions{10});
    CHECK(r.interactions == 10);
    CHECK(r.stopped_by == StopKind::MaxInteractions);
    CHECK_FALSE(r.silent);
    CHECK_FALSE(r.stabilization_time);
    CHECK_THROWS_AS(run_until(new_population(proto, std::span<const Symbol>(inputs), 1), proto, Silent{},
                              MaxInteractions{0}),
                    std::invalid_argument);
}

TEST_CASE("predicate stop") {
    const auto inputs = repeat(20, 10);
    BackupProtocol proto;
    auto pop = new_population(proto, std::span<const Symbol>(inputs), 9);
    Predicate<BackupState> no_b{"no B outputs", [](const Population<BackupState>& p) {
        for (const auto& s : p.agents())
            if (s.output == Symbol::B) return false;
        return true;
    }};
    auto r = run_until(std::move(pop), proto, no_b, MaxInteractions{10000000});
    CHECK(r.stopped_by == StopKind::Predicate);
    for (const auto& s : r.population.agents()) CHECK(s.output != Symbol::B);
}

TEST_CASE("is_silent examples") {
    BackupProtocol proto;
    std::vector<BackupState> same(5, BackupState{Symbol::A, Symbol::A, true});
    CHECK(is_silent<BackupProtocol>(std::span<const BackupState>(same), proto));
    std::vector<BackupState> opposed{{Symbol::A, Symbol::A, true}, {Symbol::B, Symbol::B, true}};
    CHECK_FALSE(is_silent<BackupProtocol>(std::span<const BackupState>(opposed), proto));

    // A lone state is never paired with itself.
    SizeEstimationProtocol size;
    std::vector<SizeEstState> one_each{{SizeKind::L, 0}, {SizeKind::L, 1}};
    CHECK(is_silent<SizeEstimationProtocol>(std::span<const SizeEstState>(one_each), size));
    std::vector<SizeEstState> pair_l0{{SizeKind::L, 0}, {SizeKind::L, 0}, {SizeKind::L, 1}};
    CHECK_FALSE(is_silent<SizeEstimationProtocol>(std::span<const SizeEstState>(pair_l0), size));
}

TEST_CASE("silence is sound: a million more steps change nothing") {
    SUBCASE("backup") {
        const auto inputs = repeat(7, 5);
        BackupProtocol proto;
        auto r = run_until(new_population(proto, std::span<const Symbol>(inputs), 4), proto, Silent{},
                           MaxInteractions{10000000});
        REQUIRE(r.silent);
        auto pop = std::move(r.population);
        const std::vector<BackupState> before(pop.agents().begin(), pop.agents().end());
        for (int t = 0; t < 1000000; ++t) REQUIRE_FALSE(step(pop, proto).changed);
        CHECK(std::equal(before.begin(), before.end(), pop.agents().begin()));
    }
    SUBCASE("majority") {
        MajorityProtocol proto(MajorityParams::paper_sim(200));
        const auto inputs = inputs_for_gap(200, 2);
        auto r = run_until(new_population(proto, std::span<const Symbol>(inputs), 4), proto, Silent{},
                           guard_for_time(1e5, 200));
        REQUIRE(r.silent);
        auto pop = std::move(r.population);
        for (int t = 0; t < 1000000; ++t) REQUIRE_FALSE(step(pop, proto).changed);
    }
}

TEST_CASE("transitions are symmetric up to orientation") {
    // Collect states from a few majority trajectories, then compare
    // transition(a, b) with transition(b, a) as multisets, ignoring inputs.
    MajorityParams params = MajorityParams::paper_sim(300);
    params.drip_probability = 1.0;
    MajorityProtocol proto(params);
    std::vector<AgentState> seen;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto inputs = inputs_for_gap(300, seed % 2 ? 2 : 0);
        auto pop = new_population(proto, std::span<const Symbol>(inputs), seed);
        for (int t = 0; t < 400; ++t) {
            auto r = run_until(std::move(pop), proto, MaxInteractions{500}, MaxInteractions{1000});
            pop = std::move(r.population);
            seen.push_back(pop[static_cast<std::size_t>(t) % 300]);
            seen.push_back(pop[static_cast<std::size_t>(t * 7 + 3) % 300]);
        }
    }
    std::mt19937_64 pick(5);
    int compared = 0;
    for (int t = 0; t < 20000; ++t) {
        const auto& a = seen[pick() % seen.size()];
        const auto& b = seen[pick() % seen.size()];
        AlwaysCoin coin;
        auto [x1, y1] = proto.transition(a, b, coin);
        auto [y2, x2] = proto.transition(b, a, coin);
        // Positional tie-breaks (which agent keeps which input in phase 0,
        // becomes Clock, takes the floor half, or drips) may hand the updated
        // fields to the other agent. The carried output and assigned bits must
        // agree as multisets on their own; everything else jointly.
        const auto pair_eq = [](auto a1, auto b1, auto a2, auto b2) {
            return (a1 == a2 && b1 == b2) || (a1 == b2 && b1 == a2);
        };
        const bool carried = pair_eq(x1.output, y1.output, x2.output, y2.output) &&
                             pair_eq(x1.assigned, y1.assigned, x2.assigned, y2.assigned);
        for (auto* s : {&x1, &y1, &x2, &y2}) {
            s->input = Symbol::A;
            s->output = Symbol::A;
            s->assigned = false;
        }
        const bool same = carried && pair_eq(x1, y1, x2, y2);
        if (!same) FAIL_CHECK(describe(a) << " x " << describe(b) << "\n -> " << describe(x1) << " / " << describe(y1) << "\n <- " << describe(x2) << " / " << describe(y2));
        ++compared;
    }
    CHECK(compared == 20000);
}

}  // TEST_SUITE
