#include <doctest.h>

#include <algorithm>
#include <queue>
#include <set>

#include "popsim/size_estimation.hpp"

using namespace popsim;

namespace {

using Config = std::vector<SizeEstState>;

Config normalized(Config c) {
    std::sort(c.begin(), c.end(), [](const SizeEstState& a, const SizeEstState& b) {
        return std::pair(a.kind, a.level) < std::pair(b.kind, b.level);
    });
    return c;
}

struct ConfigLess {
    bool operator()(const Config& a, const Config& b) const {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                            [](const SizeEstState& x, const SizeEstState& y) {
                                                return std::pair(x.kind, x.level) <
                                                       std::pair(y.kind, y.level);
                                            });
    }
};

}  // namespace

TEST_SUITE("size_estimation") {

TEST_CASE("transition examples") {
    const SizeEstimationProtocol proto;
    const SizeEstState l1{SizeKind::L, 1}, l2{SizeKind::L, 2}, l3{SizeKind::L, 3};
    const SizeEstState f2{SizeKind::F, 2}, f3{SizeKind::F, 3}, f5{SizeKind::F, 5};

    auto [a, b] = proto.transition(l2, l2);
    CHECK(a == l3);
    CHECK(b == f3);

    auto [c, d] = proto.transition(f5, f2);
    CHECK(c == f5);
    CHECK(d == f5);

    auto [e, f] = proto.transition(l1, l3);
    CHECK(e == l1);
    CHECK(f == l3);
    CHECK(proto.is_null(l1, l3));
    CHECK(proto.is_null(l2, f3));
    CHECK(proto.is_null(f3, f3));
    CHECK_FALSE(proto.is_null(l2, l2));

    CHECK(describe(l3) == "L3");
    CHECK(describe(f5) == "F5");
}

TEST_CASE("floor_log2 and leader mass") {
    CHECK(floor_log2(1) == 0);
    CHECK(floor_log2(2) == 1);
    CHECK(floor_log2(3) == 1);
    CHECK(floor_log2(64) == 6);
    CHECK(floor_log2(65) == 6);
    const std::vector<SizeEstState> agents{{SizeKind::L, 2}, {SizeKind::L, 0}, {SizeKind::F, 9}};
    CHECK(leader_mass(agents) == 5);
}

TEST_CASE("check flags bad final populations") {
    std::vector<SizeEstState> good{{SizeKind::L, 2}, {SizeKind::L, 0}, {SizeKind::F, 2},
                                   {SizeKind::F, 2}, {SizeKind::F, 2}};
    CHECK(sizeest_check(good, 5).ok);
    auto wrong_levels = good;
    wrong_levels[1] = {SizeKind::F, 2};
    CHECK_FALSE(sizeest_check(wrong_levels, 5).ok);
    auto disagree = good;
    disagree[2].level = 1;
    const auto r = sizeest_check(disagree, 5);
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.f_value);
}

TEST_CASE("brute force over every interleaving for n = 2..6") {
    const SizeEstimationProtocol proto;
    for (std::uint64_t n = 2; n <= 6; ++n) {
        CAPTURE(n);
        std::set<Config, ConfigLess> seen;
        std::queue<Config> todo;
        const Config start(n, SizeEstState{});
        seen.insert(start);
        todo.push(start);
        int terminals = 0;
        while (!todo.empty()) {
            const Config c = todo.front();
            todo.pop();
            REQUIRE(leader_mass(c) == n);
            bool silent = true;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (i == j || proto.is_null(c[i], c[j])) continue;
                    silent = false;
                    Config next = c;
                    std::tie(next[i], next[j]) = proto.transition(c[i], c[j]);
                    next = normalized(next);
                    if (seen.insert(next).second) todo.push(next);
                }
            }
            if (silent) {
                ++terminals;
                const auto report = sizeest_check(c, n);
                CHECK(report.ok);
            }
        }
        // Leader levels and the follower value are both forced, so the silent
        // configuration is unique.
        CHECK(terminals == 1);
    }
}

TEST_CASE("seeded runs reach the correct silent configuration for n = 2..64") {
    for (std::uint64_t n = 2; n <= 64; ++n) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto r = run_size_estimation(n, seed, 1e5);
            CAPTURE(n);
            CAPTURE(seed);
            CHECK(r.ok);
            CHECK(r.silence_time);
            CHECK(r.conservation_violations == 0);
            REQUIRE(r.f_value);
            CHECK(*r.f_value == floor_log2(n));
        }
    }
}

TEST_CASE("larger sizes") {
    for (std::uint64_t n : {100, 1000, 4096}) {
        const auto r = run_size_estimation(n, 7, 1e6);
        CAPTURE(n);
        CHECK(r.ok);
        CHECK(r.conservation_violations == 0);
    }
}

}  // TEST_SUITE
