#include <doctest.h>

#include "properties.hpp"

using props::Settings;

TEST_CASE("flops and bytes are conserved under every split") {
    for (std::uint64_t seed : {1, 2, 3}) CHECK_MESSAGE(props::check_work_conservation({seed, 300}).empty(),
                                                       props::check_work_conservation({seed, 300}));
}

TEST_CASE("each stage splits heads exactly at the mapping count") {
    const auto r = props::check_head_conservation({11, 300});
    CHECK_MESSAGE(r.empty(), r);
}

TEST_CASE("every policy returns a split that fits both tiers") {
    const auto r = props::check_capacity_feasibility({21, 60});
    CHECK_MESSAGE(r.empty(), r);
}

TEST_CASE("page tables stay injective and leak-free under random operations") {
    for (std::uint64_t seed : {31, 32}) {
        const auto r = props::check_memsim_random_ops({seed, 10000});
        CHECK_MESSAGE(r.empty(), r);
    }
}

TEST_CASE("TLB hits and misses account for every access") {
    const auto r = props::check_tlb_accounting({41, 200});
    CHECK_MESSAGE(r.empty(), r);
}

TEST_CASE("iteration latency never beats the roofline floor") {
    const auto r = props::check_roofline_floor({51, 150});
    CHECK_MESSAGE(r.empty(), r);
}

TEST_CASE("runs are deterministic under a fixed seed") {
    const auto r = props::check_determinism({61, 40});
    CHECK_MESSAGE(r.empty(), r);
}

TEST_CASE("closed-form latency equals the timeline without translation") {
    const auto r = props::check_analytic_matches_timeline({71, 300});
    CHECK_MESSAGE(r.empty(), r);
}
