#include <doctest.h>

#include <numeric>

#include "asymsim/workload.hpp"

using namespace asymsim;

namespace {

Count stage_sum(const std::vector<KernelDesc>& ks, int layer, Stage st, Count KernelDesc::*field) {
    Count t = 0;
    for (const auto& k : ks)
        if (k.layer_index == layer && k.stage == st) t += k.*field;
    return t;
}

Count stage_flops(const std::vector<KernelDesc>& ks, int layer, Stage st, OpClass op) {
    Count t = 0;
    for (const auto& k : ks)
        if (k.layer_index == layer && k.stage == st && k.op_class == op) t += k.flops;
    return t;
}

}  // namespace

TEST_CASE("presets carry the published shapes") {
    const auto g = gpt3_175b();
    CHECK(g.num_layers == 96);
    CHECK(g.num_heads == 96);
    CHECK(g.model_dim == 12288);
    CHECK(g.ffn_dim == 4 * g.model_dim);
    CHECK(llama2_70b().kv_heads() == 8);
    CHECK(model_preset("CHINCHILLA-70B").num_layers == 80);
    CHECK_THROWS_AS(model_preset("bert"), ConfigError);
}

TEST_CASE("model validation names the broken constraint") {
    auto m = gpt3_175b();
    m.kv_groups = 5;
    CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("kv_groups"), ConfigError);
    m = gpt3_175b();
    m.model_dim = 1000;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("qkv projection costs 2*3*D^2 flops per token") {
    const auto m = gpt3_175b();
    const auto ks = enumerate_kernels(m, BatchState::uniform(1, 1), {0, 0, 0});
    CHECK(stage_flops(ks, 0, Stage::Qkv, OpClass::Gemm) + stage_flops(ks, 0, Stage::Qkv, OpClass::Gemv) ==
          905'969'664);
}

TEST_CASE("attention reads 2*B*S*D bytes of KV per layer") {
    const auto m = gpt3_175b();
    const auto ks = enumerate_kernels(m, BatchState::uniform(32, 2048), {0, 0, 0});
    CHECK(stage_sum(ks, 0, Stage::Attention, &KernelDesc::kv_bytes) == 1'610'612'736);
    CHECK(stage_sum(ks, 95, Stage::Attention, &KernelDesc::kv_bytes) == 1'610'612'736);
}

TEST_CASE("an all-capacity split runs every kernel on the capacity tier") {
    const auto m = chinchilla_70b();
    for (const auto& k : enumerate_kernels(m, BatchState::uniform(4, 100), {0, 0, 0}))
        CHECK(k.side == Side::Capacity);
    for (const auto& k : enumerate_kernels(m, BatchState::uniform(4, 100), {64, 64, 64}))
        CHECK(k.side == Side::Bandwidth);
}

TEST_CASE("kernel ids are dense and dependencies point backwards") {
    const auto m = llama2_70b();
    for (BarrierMode b : {BarrierMode::Stage, BarrierMode::Kernel}) {
        const auto ks = enumerate_kernels(m, BatchState::uniform(8, 64), {17, 24, 40}, b);
        int last_group = 0;
        for (std::size_t i = 0; i < ks.size(); ++i) {
            CHECK(ks[i].id == static_cast<int>(i));
            for (int d : ks[i].deps) CHECK(d < ks[i].id);
            CHECK(ks[i].barrier_group >= last_group);
            last_group = ks[i].barrier_group;
        }
    }
}

TEST_CASE("footprint formulas") {
    const auto g = gpt3_175b();
    const auto f = footprint(g, BatchState::uniform(32, 2048));
    CHECK(f.kv_cache() == 2LL * 96 * 12288 * 32 * 2048);
    // 12*D^2 weights per layer, INT8.
    const double w = static_cast<double>(f.weights());
    CHECK(w == doctest::Approx(1.75e11).epsilon(0.05));
    CHECK(f[Sublayer::Attention].kv_cache == f.kv_cache());
    CHECK(f[Sublayer::Attention].weights == 0);
}

TEST_CASE("grouped KV heads shrink the cache by the group factor") {
    auto l = llama2_70b();
    auto full = l;
    full.kv_groups = 1;
    const auto b = BatchState::uniform(16, 1000);
    CHECK(footprint(full, b).kv_cache() == 8 * footprint(l, b).kv_cache());
}

TEST_CASE("attention splits may not cut a KV group") {
    const auto l = llama2_70b();
    CHECK_THROWS_AS(validate_mapping(l, {0, 3, 0}), ConfigError);
    CHECK_NOTHROW(validate_mapping(l, {3, 8, 5}));
    CHECK_THROWS_AS(validate_mapping(l, {65, 0, 0}), ConfigError);
    CHECK_THROWS_AS(validate_mapping(l, {0, 0, -1}), ConfigError);
}

TEST_CASE("batch advance") {
    const auto m = gpt3_175b();
    BatchState b = BatchState::uniform(6, 100);
    b.seq_lens = {1, 50, 100, 700, 1500, 2000};

    SUBCASE("no termination grows every request by one") {
        std::mt19937_64 rng(42);
        const auto next = advance_batch(b, {0.0, 1, 1}, rng, m.max_seq_len);
        for (std::size_t i = 0; i < b.seq_lens.size(); ++i) CHECK(next.seq_lens[i] == b.seq_lens[i] + 1);
        CHECK(next.iteration == b.iteration + 1);
    }
    SUBCASE("certain termination redraws every request") {
        std::mt19937_64 rng(42);
        const auto next = advance_batch(b, {1.0, 300, 400}, rng, m.max_seq_len);
        for (int s : next.seq_lens) {
            CHECK(s >= 300);
            CHECK(s <= 400);
        }
    }
    SUBCASE("requests at the limit are replaced") {
        BatchState full = BatchState::uniform(2, m.max_seq_len);
        std::mt19937_64 rng(1);
        const auto next = advance_batch(full, {0.0, 10, 10}, rng, m.max_seq_len);
        CHECK(next.seq_lens == std::vector<int>{10, 10});
    }
    SUBCASE("same seed and state give the same draw, successive draws differ") {
        std::mt19937_64 a(42), c(42);
        const auto x = advance_batch(b, {0.5, 1, 2000}, a, m.max_seq_len);
        const auto y = advance_batch(b, {0.5, 1, 2000}, c, m.max_seq_len);
        CHECK(x.seq_lens == y.seq_lens);
        const auto z = advance_batch(b, {0.5, 1, 2000}, a, m.max_seq_len);
        CHECK(z.seq_lens != x.seq_lens);
    }
}

TEST_CASE("batch validation") {
    const auto m = gpt3_175b();
    CHECK_THROWS_AS(BatchState::uniform(2, 4096).validate(m), ConfigError);
    CHECK_THROWS_AS(BatchState::uniform(2, 0).validate(m), ConfigError);
    CHECK(BatchState::uniform(3, 7).total_tokens() == 21);
}
