#include <doctest.h>

#include <chrono>

#include "asymsim/engine.hpp"

using namespace asymsim;

namespace {

LatencyEvaluator evaluator(const ModelSpec& m, const BatchState& b, const PlatformSpec& p) {
    auto e = std::make_shared<AnalyticEvaluator>(m, b, p);
    return [e](const MappingDecision& d) { return (*e)(d); };
}

PlatformSpec no_bandwidth_tier() {
    auto p = original_platform();
    p.bandwidth_tier.capacity = 0;
    return p;
}

PlatformSpec huge_bandwidth_tier() {
    auto p = original_platform();
    p.bandwidth_tier.capacity = 4096 * GiB;
    return p;
}

}  // namespace

TEST_CASE("policy names round-trip") {
    for (const char* s : {"greedy", "flexgen", "best", "q-major", "a-major", "f-major", "sublayer",
                          "static:1,2,3"})
        CHECK(parse_policy(s).name() == s);
    CHECK(parse_policy("static:4,0,9").fixed == MappingDecision{4, 0, 9});
    CHECK_THROWS_AS(parse_policy("random"), ConfigError);
    CHECK_THROWS_AS(parse_policy("static:1,2"), ConfigError);
}

TEST_CASE("peak execution estimate") {
    const auto g = gpt3_175b();
    const auto p = original_platform();
    const auto b = BatchState::uniform(32, 2048);
    CHECK(peak_exec_estimate(g, b, Sublayer::Fc, 0, Side::Bandwidth, p) == 0.0);

    // Attention on the capacity tier is bandwidth bound: the per-layer estimate
    // matches the kernel times of the same work, and is close to bytes over bandwidth.
    const double est = peak_exec_estimate(g, b, Sublayer::Attention, 96, Side::Capacity, p);
    auto off = p;
    off.translation.enabled = false;
    double kernels = 0.0;
    Bytes bytes = 0;
    for (const auto& k : stage_kernels(g, 32, b.total_tokens(), Stage::Attention, Side::Capacity, 96)) {
        kernels += kernel_time(k, Side::Capacity, off, 0);
        bytes += k.total_bytes();
    }
    CHECK(est == doctest::Approx(kernels).epsilon(0.01));
    CHECK(est == doctest::Approx(static_cast<double>(bytes) / 544e9).epsilon(0.02));

    // With alpha = 1 the estimate is flops over peak.
    PeakExecParams unit;
    unit.alpha_fc = 1.0;
    const double one = peak_exec_estimate(g, b, Sublayer::Fc, 96, Side::Capacity, p, unit);
    unit.alpha_fc = 2.0;
    CHECK(peak_exec_estimate(g, b, Sublayer::Fc, 96, Side::Capacity, p, unit) == doctest::Approx(2 * one));
}

TEST_CASE("capacity model") {
    const auto g = gpt3_175b();
    const auto b = BatchState::uniform(32, 2048);
    const CapacityModel cap(g, b, original_platform());
    CHECK(cap.fits({0, 0, 0}));
    CHECK_FALSE(cap.fits({96, 96, 96}));
    CHECK(cap.side_total({0, 0, 0}, Side::Bandwidth) == 0);
    CHECK(cap.bytes(Sublayer::Attention, 0, Side::Bandwidth) == 0);
    CHECK(cap.bytes(Sublayer::Attention, 96, Side::Bandwidth) >= footprint(g, b).kv_cache());
    CHECK(CapacityModel(llama2_70b(), b, original_platform()).step(Sublayer::Attention) == 8);
}

TEST_CASE("greedy degenerate platforms") {
    const auto g = gpt3_175b();
    const auto b = BatchState::uniform(32, 1024);
    CHECK(greedy_map(g, b, no_bandwidth_tier()) == MappingDecision{0, 0, 0});
    CHECK(flexgen_map(g, b, no_bandwidth_tier()) == MappingDecision{0, 0, 0});
    // When one head on the capacity side outlasts everything on the bandwidth
    // side, the bandwidth side absorbs all of it.
    auto dominant = huge_bandwidth_tier();
    dominant.capacity_tier.bandwidth = 1e9;
    CHECK(greedy_map(g, b, dominant) == MappingDecision{96, 96, 96});
    // Otherwise both lanes get work: a merely faster tier does not take everything.
    const auto split = greedy_map(g, b, huge_bandwidth_tier());
    CHECK(split.n_fc < 96);
    CHECK(split.n_attention < 96);
}

TEST_CASE("flexgen splits identical tiers evenly") {
    auto p = original_platform();
    p.capacity_tier.capacity = p.bandwidth_tier.capacity = 512 * GiB;
    p.capacity_tier.bandwidth = p.bandwidth_tier.bandwidth;
    p.capacity_tier.access_latency = p.bandwidth_tier.access_latency;
    CHECK(flexgen_map(gpt3_175b(), BatchState::uniform(32, 1024), p) == MappingDecision{48, 48, 48});
}

TEST_CASE("exhaustive search on a single head") {
    ModelSpec m{"one", 2, 1, 64, 64, 256, 1, 1, 128};
    const auto b = BatchState::uniform(2, 16);
    auto p = original_platform();
    const auto r = exhaustive_best(m, b, p, evaluator(m, b, p));
    CHECK(r.evaluations == 8);
    CHECK(r.mapping == MappingDecision{1, 1, 1});
}

TEST_CASE("exhaustive search over GPT3 is bounded and beats greedy by at most 5%") {
    const auto g = gpt3_175b();
    const auto p = original_platform();
    for (int s : {512, 2048}) {
        const auto b = BatchState::uniform(32, s);
        const auto eval = evaluator(g, b, p);
        const auto t0 = std::chrono::steady_clock::now();
        const auto best = exhaustive_best(g, b, p, eval);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        CHECK(best.evaluations <= 97 * 97 * 97);
        CHECK(secs < 60.0);
        const double greedy = eval(greedy_map(g, b, p));
        CHECK(best.objective <= greedy);
        CHECK(greedy <= 1.05 * best.objective);
        CHECK(CapacityModel(g, b, p).fits(best.mapping));
    }
}

TEST_CASE("search budget") {
    const auto g = gpt3_175b();
    const auto b = BatchState::uniform(32, 512);
    const auto p = original_platform();
    SearchOptions tight;
    tight.max_evaluations = 1000;
    CHECK_THROWS_AS(exhaustive_best(g, b, p, evaluator(g, b, p), tight), BudgetExceeded);
}

TEST_CASE("attention-major fills the bandwidth tier with attention first") {
    const auto g = gpt3_175b();
    const auto b = BatchState::uniform(32, 1024);
    const auto p = huge_bandwidth_tier();
    CHECK(major_map(g, b, p, evaluator(g, b, p), Sublayer::Attention).mapping.n_attention == 96);
}

TEST_CASE("sublayer-granular search keeps sublayers whole") {
    const auto g = gpt3_175b();
    const auto b = BatchState::uniform(32, 1536);
    const auto p = original_platform();
    const auto r = sublayer_best(g, b, p, evaluator(g, b, p));
    for (Sublayer s : kSublayers) CHECK((r.mapping.count(s) == 0 || r.mapping.count(s) == 96));
    CHECK(r.evaluations <= 8);
}
